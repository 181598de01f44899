//! From per-triple scores to model-level metrics.
//!
//! The global average score nests unweighted means in a fixed order:
//! dimensions, then resamples of a summary, then opinions of a subset, then
//! subset sizes of a question, then questions. Every level is reduced in
//! sorted key order, so results are bit-identical for any input order.

use crate::corpus::{MinorityFlag, Question};
use crate::scores::{Dimension, ScoreVector};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, Normal};
use std::collections::{BTreeMap, BTreeSet};
use std::fmt::Write as _;

/// Confidence level of reported intervals.
pub const CI_LEVEL: f64 = 0.95;

pub const POOLED_CI_ESTIMATOR: &str = "normal-z half-width over pooled per-triple dimension means";
pub const RESAMPLE_CI_ESTIMATOR: &str = "normal-z half-width over per-resample global scores";

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum AggregateError {
    #[error("no scores for model `{0}`")]
    Empty(String),
    #[error("inconsistent cell {question_id}/{subset_id}: {reason}")]
    InconsistentCell {
        question_id: String,
        subset_id: String,
        reason: String,
    },
    #[error("every cell for model `{0}` is incomplete")]
    NoCompleteCells(String),
    #[error("need at least 2 values for an interval, got {0}")]
    TooFewValues(usize),
    #[error("confidence level must be in (0,1), got {0}")]
    BadLevel(f64),
    #[error("{0} partition is empty")]
    EmptyPartition(&'static str),
    #[error("score references unknown opinion `{0}`")]
    UnknownOpinion(String),
}

/// A judge score for one (opinion, summary) pair, with its provenance.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TripleScore {
    pub question_id: String,
    pub subset_id: String,
    pub subset_size: usize,
    pub opinion_id: String,
    pub summary_id: String,
    pub model_id: String,
    pub resample_index: u32,
    pub score: ScoreVector,
}

pub fn dim_mean(score: &ScoreVector) -> f64 {
    (score.rep + score.inf + score.neu + score.pol) / 4.0
}

/// What to do with a (question, size) cell that lacks some (opinion, resample) entries.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum IncompletePolicy {
    /// Fail the aggregation.
    #[default]
    Reject,
    /// Drop the cell and list it in the report.
    Exclude,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct GasOptions {
    /// Resamples every opinion must carry; inferred per cell when unset.
    pub expected_resamples: Option<u32>,
    pub incomplete: IncompletePolicy,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExcludedCell {
    pub question_id: String,
    pub subset_id: String,
    pub reason: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DimensionStat {
    pub dimension: Dimension,
    pub mean: f64,
    pub ci_half_width: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResampleSpread {
    /// Global score computed from resample `k` alone.
    pub per_resample: BTreeMap<u32, f64>,
    pub ci_half_width: Option<f64>,
    pub estimator: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GasReport {
    pub model_id: String,
    pub gas: f64,
    pub ci_half_width: Option<f64>,
    pub ci_estimator: String,
    pub per_dimension: Vec<DimensionStat>,
    pub per_size: BTreeMap<usize, f64>,
    pub per_question: BTreeMap<String, f64>,
    pub resample_spread: Option<ResampleSpread>,
    pub triples: usize,
    pub excluded_cells: Vec<ExcludedCell>,
}

/// opinion -> resample -> score
type CellScores = BTreeMap<String, BTreeMap<u32, ScoreVector>>;

struct Cell {
    size: usize,
    scores: CellScores,
}

/// question -> subset -> cell, complete cells only.
type Table = BTreeMap<String, BTreeMap<String, Cell>>;

fn build_table<'a>(
    triples: impl Iterator<Item = &'a TripleScore>,
    opts: &GasOptions,
) -> Result<(Table, Vec<ExcludedCell>), AggregateError> {
    let mut raw: BTreeMap<(String, String), (usize, CellScores, Vec<String>)> = BTreeMap::new();
    for t in triples {
        let key = (t.question_id.clone(), t.subset_id.clone());
        let entry = raw.entry(key.clone()).or_insert_with(|| (t.subset_size, BTreeMap::new(), Vec::new()));
        if entry.0 != t.subset_size {
            return Err(AggregateError::InconsistentCell {
                question_id: key.0,
                subset_id: key.1,
                reason: format!("subset size given as both {} and {}", entry.0, t.subset_size),
            });
        }
        let per_opinion = entry.1.entry(t.opinion_id.clone()).or_default();
        if per_opinion.insert(t.resample_index, t.score).is_some() {
            entry.2.push(format!(
                "duplicate score for opinion `{}` resample {}",
                t.opinion_id, t.resample_index
            ));
        }
    }

    let mut table: Table = BTreeMap::new();
    let mut excluded = Vec::new();
    for ((question_id, subset_id), (size, scores, mut problems)) in raw {
        problems.extend(cell_problem(size, &scores, opts.expected_resamples));
        if let Some(reason) = problems.into_iter().next() {
            match opts.incomplete {
                IncompletePolicy::Reject => {
                    return Err(AggregateError::InconsistentCell {
                        question_id,
                        subset_id,
                        reason,
                    })
                }
                IncompletePolicy::Exclude => {
                    excluded.push(ExcludedCell {
                        question_id,
                        subset_id,
                        reason,
                    });
                    continue;
                }
            }
        }
        table
            .entry(question_id)
            .or_default()
            .insert(subset_id, Cell { size, scores });
    }
    Ok((table, excluded))
}

fn cell_problem(size: usize, scores: &CellScores, expected: Option<u32>) -> Option<String> {
    if scores.len() != size {
        return Some(format!("{} of {size} opinions scored", scores.len()));
    }
    let mut sets = scores.values().map(|m| m.keys().copied().collect::<BTreeSet<u32>>());
    let first = sets.next()?;
    if sets.any(|s| s != first) {
        return Some("opinions carry different resample sets".into());
    }
    if let Some(r) = expected {
        if first.len() != r as usize {
            return Some(format!("{} of {r} resamples scored", first.len()));
        }
    }
    None
}

fn mean(values: impl IntoIterator<Item = f64>) -> f64 {
    let mut sum = 0.0;
    let mut n = 0usize;
    for v in values {
        sum += v;
        n += 1;
    }
    sum / n as f64
}

struct Nested {
    global: f64,
    per_question: BTreeMap<String, f64>,
    per_size: BTreeMap<usize, f64>,
}

/// Four-level nested mean of `value` over the table, restricted to resamples accepted by `keep`.
fn nested_mean(table: &Table, value: impl Fn(&ScoreVector) -> f64 + Sync, keep: impl Fn(u32) -> bool + Sync) -> Nested {
    let per_q: Vec<(String, Vec<(usize, f64)>)> = table
        .par_iter()
        .map(|(q, cells)| {
            let cell_means = cells
                .values()
                .map(|cell| {
                    let m = mean(cell.scores.values().map(|by_resample| {
                        mean(by_resample.iter().filter(|(k, _)| keep(**k)).map(|(_, s)| value(s)))
                    }));
                    (cell.size, m)
                })
                .collect();
            (q.clone(), cell_means)
        })
        .collect();

    let mut per_question = BTreeMap::new();
    let mut by_size: BTreeMap<usize, Vec<f64>> = BTreeMap::new();
    for (q, cells) in &per_q {
        per_question.insert(q.clone(), mean(cells.iter().map(|c| c.1)));
        for &(size, m) in cells {
            by_size.entry(size).or_default().push(m);
        }
    }
    Nested {
        global: mean(per_question.values().copied()),
        per_question,
        per_size: by_size.into_iter().map(|(k, v)| (k, mean(v))).collect(),
    }
}

/// Normal-approximation half-width `z * s / sqrt(m)` with sample standard deviation `s`.
pub fn ci_half_width(values: &[f64], level: f64) -> Result<f64, AggregateError> {
    if !(level > 0.0 && level < 1.0) {
        return Err(AggregateError::BadLevel(level));
    }
    let m = values.len();
    if m < 2 {
        return Err(AggregateError::TooFewValues(m));
    }
    let mu = mean(values.iter().copied());
    let var = values.iter().map(|v| (v - mu) * (v - mu)).sum::<f64>() / (m - 1) as f64;
    let z = Normal::standard().inverse_cdf(0.5 + level / 2.0);
    Ok(z * var.sqrt() / (m as f64).sqrt())
}

fn model_triples<'a>(scores: &'a [TripleScore], model_id: &'a str) -> impl Iterator<Item = &'a TripleScore> + 'a {
    scores.iter().filter(move |t| t.model_id == model_id)
}

/// Global average score and breakdowns for one model.
pub fn gas(scores: &[TripleScore], model_id: &str, opts: &GasOptions) -> Result<GasReport, AggregateError> {
    if model_triples(scores, model_id).next().is_none() {
        return Err(AggregateError::Empty(model_id.to_string()));
    }
    let (table, excluded_cells) = build_table(model_triples(scores, model_id), opts)?;
    if table.is_empty() {
        return Err(AggregateError::NoCompleteCells(model_id.to_string()));
    }

    let all = |_: u32| true;
    let overall = nested_mean(&table, dim_mean, all);

    let pooled: Vec<&ScoreVector> = table
        .values()
        .flat_map(|cells| cells.values())
        .flat_map(|c| c.scores.values())
        .flat_map(|r| r.values())
        .collect();
    let pooled_ci = |f: &dyn Fn(&ScoreVector) -> f64| {
        let vals: Vec<f64> = pooled.iter().map(|s| f(s)).collect();
        ci_half_width(&vals, CI_LEVEL).ok()
    };

    let per_dimension = Dimension::ALL
        .iter()
        .map(|&d| DimensionStat {
            dimension: d,
            mean: nested_mean(&table, move |s| s.get(d), all).global,
            ci_half_width: pooled_ci(&move |s: &ScoreVector| s.get(d)),
        })
        .collect();

    // Resample indices present in every cell (cells are internally uniform).
    let resamples: BTreeSet<u32> = table
        .values()
        .flat_map(|cells| cells.values())
        .filter_map(|c| c.scores.values().next())
        .map(|r| r.keys().copied().collect::<BTreeSet<u32>>())
        .reduce(|a, b| a.intersection(&b).copied().collect())
        .unwrap_or_default();
    let resample_spread = (resamples.len() >= 2).then(|| {
        let per_resample: BTreeMap<u32, f64> = resamples
            .iter()
            .map(|&k| (k, nested_mean(&table, dim_mean, move |r| r == k).global))
            .collect();
        let vals: Vec<f64> = per_resample.values().copied().collect();
        ResampleSpread {
            ci_half_width: ci_half_width(&vals, CI_LEVEL).ok(),
            per_resample,
            estimator: RESAMPLE_CI_ESTIMATOR.to_string(),
        }
    });

    Ok(GasReport {
        model_id: model_id.to_string(),
        gas: overall.global,
        ci_half_width: pooled_ci(&dim_mean),
        ci_estimator: POOLED_CI_ESTIMATOR.to_string(),
        per_dimension,
        per_size: overall.per_size,
        per_question: overall.per_question,
        resample_spread,
        triples: pooled.len(),
        excluded_cells,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RelativePreference {
    pub model_id: String,
    /// Question-level score minus the model's global average.
    pub diffs: BTreeMap<String, f64>,
    pub global: f64,
    pub warning: Option<String>,
}

/// Per-question deviation of a model's score from its own global average.
pub fn relative_preference(
    scores: &[TripleScore],
    model_id: &str,
    opts: &GasOptions,
) -> Result<RelativePreference, AggregateError> {
    let report = gas(scores, model_id, opts)?;
    let warning = (report.per_question.len() < 2)
        .then(|| "fewer than 2 questions: relative preference is degenerate".to_string());
    let diffs = report
        .per_question
        .iter()
        .map(|(q, m)| (q.clone(), if warning.is_some() { 0.0 } else { m - report.gas }))
        .collect();
    Ok(RelativePreference {
        model_id: model_id.to_string(),
        diffs,
        global: report.gas,
        warning,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HeatmapCell {
    pub question_id: String,
    pub topic_label: String,
    pub model_id: String,
    pub diff: f64,
}

/// Topic x model matrix of relative preference scores, for plotting.
pub fn topic_heatmap(prefs: &[RelativePreference], questions: &[Question]) -> Vec<HeatmapCell> {
    let topics: BTreeMap<&str, &str> = questions.iter().map(|q| (q.id.as_str(), q.topic_label.as_str())).collect();
    let mut cells = Vec::new();
    for p in prefs {
        for (q, &diff) in &p.diffs {
            cells.push(HeatmapCell {
                question_id: q.clone(),
                topic_label: topics.get(q.as_str()).copied().unwrap_or_default().to_string(),
                model_id: p.model_id.clone(),
                diff,
            });
        }
    }
    cells.sort_by(|a, b| (&a.question_id, &a.model_id).cmp(&(&b.question_id, &b.model_id)));
    cells
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MinorityGap {
    pub model_id: String,
    pub minority_mean_rep: f64,
    pub nonminority_mean_rep: f64,
    /// Non-minority minus minority.
    pub gap: f64,
    pub minority_n: usize,
    pub nonminority_n: usize,
}

/// Mean representativeness for self-identified minority opinions versus all others.
pub fn minority_gap(
    scores: &[TripleScore],
    flag_of: impl Fn(&str) -> Option<MinorityFlag>,
    model_id: &str,
) -> Result<MinorityGap, AggregateError> {
    let mut minority = Vec::new();
    let mut others = Vec::new();
    for t in model_triples(scores, model_id) {
        let flag = flag_of(&t.opinion_id).ok_or_else(|| AggregateError::UnknownOpinion(t.opinion_id.clone()))?;
        if flag.is_minority() {
            minority.push(t.score.rep);
        } else {
            others.push(t.score.rep);
        }
    }
    if minority.is_empty() {
        return Err(AggregateError::EmptyPartition("minority"));
    }
    if others.is_empty() {
        return Err(AggregateError::EmptyPartition("non-minority"));
    }
    let minority_mean_rep = mean(minority.iter().copied());
    let nonminority_mean_rep = mean(others.iter().copied());
    Ok(MinorityGap {
        model_id: model_id.to_string(),
        minority_mean_rep,
        nonminority_mean_rep,
        gap: nonminority_mean_rep - minority_mean_rep,
        minority_n: minority.len(),
        nonminority_n: others.len(),
    })
}

fn fmt_ci(ci: Option<f64>) -> String {
    ci.map_or_else(|| "n/a".to_string(), |c| format!("{c:.4}"))
}

/// Leaderboard as an aligned text table, best model first.
pub fn leaderboard_table(reports: &[GasReport]) -> String {
    let mut rows: Vec<&GasReport> = reports.iter().collect();
    rows.sort_by(|a, b| b.gas.total_cmp(&a.gas).then_with(|| a.model_id.cmp(&b.model_id)));
    let width = rows.iter().map(|r| r.model_id.len()).max().unwrap_or(0).max("model".len());
    let mut out = String::new();
    let _ = writeln!(
        out,
        "{:<width$}  {:>8}  {:>8}  {:>8}  {:>8}  {:>8}  {:>8}  {:>8}  {:>8}",
        "model", "GAS", "±CI", "rep", "inf", "neu", "pol", "triples", "excluded"
    );
    for r in rows {
        let dims: Vec<String> = r.per_dimension.iter().map(|d| format!("{:.4}", d.mean)).collect();
        let _ = writeln!(
            out,
            "{:<width$}  {:>8.4}  {:>8}  {:>8}  {:>8}  {:>8}  {:>8}  {:>8}  {:>8}",
            r.model_id,
            r.gas,
            fmt_ci(r.ci_half_width),
            dims[0],
            dims[1],
            dims[2],
            dims[3],
            r.triples,
            r.excluded_cells.len()
        );
    }
    out
}
