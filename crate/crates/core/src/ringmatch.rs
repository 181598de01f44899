//! Ring-based summary matching.
//!
//! Summaries of one question are permuted by seed and laid out on a ring.
//! Each summary is paired with the next `k` summaries clockwise, so every
//! summary appears exactly `k` times as A and `k` times as B. When a total
//! pair budget `M` is given instead, `k = M / n` full rounds are generated
//! and the first `M mod n` positions receive one extra pair at offset `k + 1`.
//!
//! Offsets of `n` or more would wrap onto the summary itself or repeat a
//! partner, so specs that require them are rejected up front.

use crate::rng::PortableRng;
use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;
use std::fmt::Write as _;

/// Comparisons per summary when none is configured.
pub const DEFAULT_K: usize = 6;

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum RingError {
    #[error("need at least 2 summaries to pair, got {0}")]
    TooFewSummaries(usize),
    #[error("offset wraps to self-pair: offset {offset} with only {n} summaries (max offset {max})", max = .n - 1)]
    OffsetWraps { offset: usize, n: usize },
    #[error("pairing spec must be positive")]
    Zero,
    #[error("pairing spec must set exactly one of k or M for mode {0}")]
    Malformed(&'static str),
    #[error("duplicate summary id `{0}`")]
    DuplicateSummary(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PairingMode {
    PerSummaryK,
    #[serde(rename = "total_M")]
    TotalM,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PairingSpec {
    pub mode: PairingMode,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub k: Option<usize>,
    #[serde(default, rename = "M", alias = "m", skip_serializing_if = "Option::is_none")]
    pub m: Option<usize>,
    pub seed: u64,
}

impl PairingSpec {
    pub fn per_summary(k: usize, seed: u64) -> Self {
        Self {
            mode: PairingMode::PerSummaryK,
            k: Some(k),
            m: None,
            seed,
        }
    }

    pub fn total(m: usize, seed: u64) -> Self {
        Self {
            mode: PairingMode::TotalM,
            k: None,
            m: Some(m),
            seed,
        }
    }

    /// Returns `(full_rounds, extra_pairs)` for `n` summaries, checking preconditions.
    pub fn rounds(&self, n: usize) -> Result<(usize, usize), RingError> {
        if n < 2 {
            return Err(RingError::TooFewSummaries(n));
        }
        let (k, r) = match (self.mode, self.k, self.m) {
            (PairingMode::PerSummaryK, Some(k), None) => (k, 0),
            (PairingMode::TotalM, None, Some(m)) => (m / n, m % n),
            (PairingMode::PerSummaryK, ..) => return Err(RingError::Malformed("per_summary_k")),
            (PairingMode::TotalM, ..) => return Err(RingError::Malformed("total_M")),
        };
        if k == 0 && r == 0 {
            return Err(RingError::Zero);
        }
        let max_offset = if r > 0 { k + 1 } else { k };
        if max_offset > n - 1 {
            return Err(RingError::OffsetWraps {
                offset: max_offset,
                n,
            });
        }
        Ok((k, r))
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ComparisonPair {
    pub question_id: String,
    pub a_summary_id: String,
    pub b_summary_id: String,
    pub offset: usize,
}

/// Generates balanced comparison pairs for one question's summaries.
pub fn ring_pairs(
    question_id: &str,
    summaries: &[String],
    spec: &PairingSpec,
) -> Result<Vec<ComparisonPair>, RingError> {
    {
        let mut sorted: Vec<&String> = summaries.iter().collect();
        sorted.sort_unstable();
        if let Some(w) = sorted.windows(2).find(|w| w[0] == w[1]) {
            return Err(RingError::DuplicateSummary(w[0].clone()));
        }
    }
    Ok(ring_index_pairs(question_id, summaries.len(), spec)?
        .into_iter()
        .map(|(a, b, offset)| ComparisonPair {
            question_id: question_id.to_string(),
            a_summary_id: summaries[a].clone(),
            b_summary_id: summaries[b].clone(),
            offset,
        })
        .collect())
}

/// As [`ring_pairs`] over positions `0..n`: `(a, b, offset)` index triples.
pub fn ring_index_pairs(question_id: &str, n: usize, spec: &PairingSpec) -> Result<Vec<(usize, usize, usize)>, RingError> {
    let (k, extra) = spec.rounds(n)?;
    let mut ring: Vec<usize> = (0..n).collect();
    PortableRng::for_stream(spec.seed, &["ring", question_id]).shuffle(&mut ring);
    Ok(offsets_on_ring(&ring, k, extra))
}

fn offsets_on_ring(ring: &[usize], k: usize, extra: usize) -> Vec<(usize, usize, usize)> {
    let n = ring.len();
    let mut pairs = Vec::with_capacity(n * k + extra);
    for i in 0..n {
        for offset in 1..=k {
            pairs.push((ring[i], ring[(i + offset) % n], offset));
        }
    }
    for i in 0..extra {
        pairs.push((ring[i], ring[(i + k + 1) % n], k + 1));
    }
    pairs
}

/// The pairing loop over an already permuted ring of ids.
pub fn pairs_on_ring(question_id: &str, ring: &[String], k: usize, extra: usize) -> Vec<ComparisonPair> {
    let positions: Vec<usize> = (0..ring.len()).collect();
    offsets_on_ring(&positions, k, extra)
        .into_iter()
        .map(|(a, b, offset)| ComparisonPair {
            question_id: question_id.to_string(),
            a_summary_id: ring[a].clone(),
            b_summary_id: ring[b].clone(),
            offset,
        })
        .collect()
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Appearances {
    pub as_a: usize,
    pub as_b: usize,
    pub total: usize,
}

/// Per-summary appearance counts, keyed by summary id.
pub fn pair_balance_report(pairs: &[ComparisonPair]) -> BTreeMap<String, Appearances> {
    let mut report: BTreeMap<String, Appearances> = BTreeMap::new();
    for p in pairs {
        let a = report.entry(p.a_summary_id.clone()).or_default();
        a.as_a += 1;
        a.total += 1;
        let b = report.entry(p.b_summary_id.clone()).or_default();
        b.as_b += 1;
        b.total += 1;
    }
    report
}

/// Renders a balance report as an aligned text table.
pub fn balance_table(report: &BTreeMap<String, Appearances>) -> String {
    let width = report.keys().map(String::len).max().unwrap_or(0).max("summary".len());
    let mut out = String::new();
    let _ = writeln!(out, "{:<width$}  {:>5}  {:>5}  {:>5}", "summary", "as_a", "as_b", "total");
    for (id, c) in report {
        let _ = writeln!(out, "{:<width$}  {:>5}  {:>5}  {:>5}", id, c.as_a, c.as_b, c.total);
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    fn ids(n: usize) -> Vec<String> {
        (0..n).map(|i| format!("s{i}")).collect()
    }

    fn tuples(pairs: &[ComparisonPair]) -> Vec<(&str, &str)> {
        pairs
            .iter()
            .map(|p| (p.a_summary_id.as_str(), p.b_summary_id.as_str()))
            .collect()
    }

    #[test]
    fn hand_trace_n4_k2() {
        let pairs = pairs_on_ring("q", &ids(4), 2, 0);
        assert_eq!(
            tuples(&pairs),
            vec![
                ("s0", "s1"),
                ("s0", "s2"),
                ("s1", "s2"),
                ("s1", "s3"),
                ("s2", "s3"),
                ("s2", "s0"),
                ("s3", "s0"),
                ("s3", "s1"),
            ]
        );
    }

    #[test]
    fn hand_trace_n4_m9() {
        let (k, r) = PairingSpec::total(9, 0).rounds(4).unwrap();
        assert_eq!((k, r), (2, 1));
        let pairs = pairs_on_ring("q", &ids(4), k, r);
        assert_eq!(pairs.len(), 9);
        assert_eq!(tuples(&pairs[8..]), vec![("s0", "s3")]);
        assert_eq!(pairs[8].offset, 3);
    }

    #[test]
    fn minimal_ring() {
        let pairs = pairs_on_ring("q", &ids(2), 1, 0);
        assert_eq!(tuples(&pairs), vec![("s0", "s1"), ("s1", "s0")]);
        let report = pair_balance_report(&pairs);
        for c in report.values() {
            assert_eq!((c.as_a, c.as_b, c.total), (1, 1, 2));
        }
    }

    #[test]
    fn balance_of_hand_trace() {
        let report = pair_balance_report(&pairs_on_ring("q", &ids(4), 2, 0));
        assert_eq!(report.len(), 4);
        for c in report.values() {
            assert_eq!((c.as_a, c.as_b, c.total), (2, 2, 4));
        }
    }

    #[test]
    fn empty_report() {
        assert!(pair_balance_report(&[]).is_empty());
    }

    #[test]
    fn wrap_rejected() {
        // n = 3, M = 7: k = 2, r = 1, extra offset 3 == n.
        let err = ring_pairs("q", &ids(3), &PairingSpec::total(7, 1)).unwrap_err();
        assert!(err.to_string().contains("offset wraps to self-pair"));
        assert!(matches!(
            ring_pairs("q", &ids(4), &PairingSpec::per_summary(4, 1)),
            Err(RingError::OffsetWraps { offset: 4, n: 4 })
        ));
        assert!(ring_pairs("q", &ids(4), &PairingSpec::per_summary(3, 1)).is_ok());
    }

    #[test]
    fn degenerate_inputs() {
        assert_eq!(
            ring_pairs("q", &ids(1), &PairingSpec::per_summary(1, 0)),
            Err(RingError::TooFewSummaries(1))
        );
        assert_eq!(
            ring_pairs("q", &ids(4), &PairingSpec::per_summary(0, 0)),
            Err(RingError::Zero)
        );
        let bad = PairingSpec {
            mode: PairingMode::TotalM,
            k: Some(2),
            m: Some(3),
            seed: 0,
        };
        assert!(matches!(ring_pairs("q", &ids(4), &bad), Err(RingError::Malformed(_))));
        let dup = vec!["a".to_string(), "b".to_string(), "a".to_string()];
        assert!(matches!(
            ring_pairs("q", &dup, &PairingSpec::per_summary(1, 0)),
            Err(RingError::DuplicateSummary(_))
        ));
    }

    #[test]
    fn m_smaller_than_n_uses_only_extras() {
        let pairs = ring_pairs("q", &ids(5), &PairingSpec::total(3, 2)).unwrap();
        assert_eq!(pairs.len(), 3);
        assert!(pairs.iter().all(|p| p.offset == 1));
    }

    #[test]
    fn seeded_and_deterministic() {
        let spec = PairingSpec::per_summary(2, 17);
        let a = ring_pairs("q", &ids(10), &spec).unwrap();
        let b = ring_pairs("q", &ids(10), &spec).unwrap();
        assert_eq!(a, b);
        let c = ring_pairs("q", &ids(10), &PairingSpec::per_summary(2, 18)).unwrap();
        assert_ne!(a, c);
    }

    #[test]
    fn spec_serde_uses_capital_m() {
        let json = serde_json::to_string(&PairingSpec::total(9, 1)).unwrap();
        assert_eq!(json, r#"{"mode":"total_M","M":9,"seed":1}"#);
    }

    #[test]
    fn table_lists_each_summary() {
        let table = balance_table(&pair_balance_report(&pairs_on_ring("q", &ids(3), 1, 0)));
        assert_eq!(table.lines().count(), 4);
        assert!(table.lines().next().unwrap().starts_with("summary"));
    }
}
