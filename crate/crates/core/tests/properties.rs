mod oracle;

use delibench::aggregate::{ci_half_width, gas, GasOptions, TripleScore};
use delibench::corpus::{
    parse_line, qc_filter, Corpus, MinorityFlag, Opinion, Question, QuestionType, Record, RecordKind,
};
use delibench::ringmatch::{pair_balance_report, ring_pairs, PairingSpec};
use delibench::rng::PortableRng;
use delibench::sampler::{build_subsets, SubsetPlan};
use delibench::scores::{
    comparison_to_raw, denormalize_value, huber, normalize_value, Judge, JudgeRequest, Role, StubJudge,
};
use delibench::stats::{pearson, spearman, PairedSeries};
use delibench::Dimension;
use proptest::prelude::*;
use std::collections::BTreeSet;

fn ids(n: usize) -> Vec<String> {
    (0..n).map(|i| format!("s{i:02}")).collect()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(256))]

    #[test]
    fn ring_k_mode_is_balanced(n in 2usize..40, k_frac in 0.0f64..1.0, seed: u64) {
        let k = 1 + ((n - 2) as f64 * k_frac) as usize;
        let pairs = ring_pairs("q", &ids(n), &PairingSpec::per_summary(k, seed)).unwrap();
        prop_assert_eq!(pairs.len(), n * k);
        prop_assert!(pairs.iter().all(|p| p.a_summary_id != p.b_summary_id));
        let ordered: BTreeSet<(&str, &str)> =
            pairs.iter().map(|p| (p.a_summary_id.as_str(), p.b_summary_id.as_str())).collect();
        prop_assert_eq!(ordered.len(), pairs.len());
        let report = pair_balance_report(&pairs);
        prop_assert_eq!(report.len(), n);
        for a in report.values() {
            prop_assert_eq!((a.as_a, a.as_b), (k, k));
        }
    }

    #[test]
    fn ring_m_mode_is_near_balanced(n in 2usize..40, m_frac in 0.0f64..1.0, seed: u64) {
        // Largest M whose extra offset still fits: (n-2)*n + (n-1) when n > 2.
        let max_m = if n == 2 { 2 } else { (n - 2) * n + (n - 1) };
        let m = 1 + ((max_m - 1) as f64 * m_frac) as usize;
        let pairs = ring_pairs("q", &ids(n), &PairingSpec::total(m, seed)).unwrap();
        prop_assert_eq!(pairs.len(), m);
        prop_assert!(pairs.iter().all(|p| p.a_summary_id != p.b_summary_id));
        let report = pair_balance_report(&pairs);
        let count = |f: fn(&delibench::ringmatch::Appearances) -> usize| {
            let v: Vec<usize> = ids(n).iter().map(|id| report.get(id).map_or(0, f)).collect();
            v.iter().max().unwrap() - v.iter().min().unwrap()
        };
        prop_assert!(count(|a| a.as_a) <= 1);
        prop_assert!(count(|a| a.as_b) <= 1);
    }

    #[test]
    fn ring_depends_only_on_seed(n in 2usize..20, seed: u64) {
        let spec = PairingSpec::per_summary(1, seed);
        prop_assert_eq!(ring_pairs("q", &ids(n), &spec).unwrap(), ring_pairs("q", &ids(n), &spec).unwrap());
    }

    #[test]
    fn gas_matches_brute_force(seed: u64) {
        let triples = oracle::random_instance(seed, &["m"]);
        let report = gas(&triples, "m", &GasOptions::default()).unwrap();
        prop_assert!((report.gas - oracle::gas(&triples, "m")).abs() < 1e-12);
        let mut shuffled = triples.clone();
        PortableRng::from_seed(seed.rotate_left(7)).shuffle(&mut shuffled);
        prop_assert!((report.gas - oracle::gas(&shuffled, "m")).abs() < 1e-12);
    }

    #[test]
    fn gas_is_permutation_invariant(seed: u64, shuffle_seed: u64) {
        let triples = oracle::random_instance(seed, &["m", "n"]);
        let mut shuffled = triples.clone();
        PortableRng::from_seed(shuffle_seed).shuffle(&mut shuffled);
        let a = gas(&triples, "m", &GasOptions::default()).unwrap();
        let b = gas(&shuffled, "m", &GasOptions::default()).unwrap();
        prop_assert_eq!(a.gas.to_bits(), b.gas.to_bits());
        prop_assert_eq!(a, b);
    }

    #[test]
    fn gas_ignores_other_models(seed: u64) {
        let both = oracle::random_instance(seed, &["m", "n"]);
        let only: Vec<TripleScore> = both.iter().filter(|t| t.model_id == "m").cloned().collect();
        let a = gas(&both, "m", &GasOptions::default()).unwrap();
        let b = gas(&only, "m", &GasOptions::default()).unwrap();
        prop_assert_eq!(a.gas.to_bits(), b.gas.to_bits());
    }

    #[test]
    fn correlations_match_brute_force(x in prop::collection::vec(-100.0f64..100.0, 3..40), seed: u64) {
        let mut rng = PortableRng::from_seed(seed);
        let y: Vec<f64> = x.iter().map(|v| v * oracle::unit(&mut rng) + oracle::unit(&mut rng) * 50.0).collect();
        let s = PairedSeries::new("p", Dimension::Rep, x.clone(), y.clone()).unwrap();
        prop_assert!((pearson(&s).unwrap() - oracle::pearson(&x, &y)).abs() < 1e-12);
        prop_assert!((spearman(&s).unwrap() - oracle::spearman(&x, &y)).abs() < 1e-12);
    }

    #[test]
    fn correlations_with_ties_match_brute_force(x in prop::collection::vec(0u8..4, 3..30), y in prop::collection::vec(0u8..4, 3..30)) {
        let n = x.len().min(y.len());
        let x: Vec<f64> = x[..n].iter().map(|&v| f64::from(v)).collect();
        let y: Vec<f64> = y[..n].iter().map(|&v| f64::from(v)).collect();
        let s = PairedSeries::new("t", Dimension::Inf, x.clone(), y.clone()).unwrap();
        match spearman(&s) {
            Ok(r) => prop_assert!((r - oracle::spearman(&x, &y)).abs() < 1e-12),
            Err(_) => prop_assert!(oracle::spearman(&x, &y).is_nan()),
        }
    }

    #[test]
    fn correlation_invariances(x in prop::collection::vec(-10.0f64..10.0, 3..30), a in 0.1f64..10.0, b in -5.0f64..5.0) {
        let y: Vec<f64> = x.iter().map(|v| v.powi(3) + v).collect();
        let Ok(base) = PairedSeries::new("b", Dimension::Neu, x.clone(), y.clone()) else { return Ok(()) };
        let affine = PairedSeries::new("a", Dimension::Neu, x.clone(), y.iter().map(|v| a * v + b).collect()).unwrap();
        if let (Ok(p0), Ok(p1)) = (pearson(&base), pearson(&affine)) {
            prop_assert!((p0 - p1).abs() < 1e-9);
            // y is strictly increasing in x.
            prop_assert!((spearman(&base).unwrap() - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn normalization_is_monotone_and_invertible(a in -1.0f64..=7.0, b in -1.0f64..=7.0) {
        let (na, nb) = (normalize_value(a), normalize_value(b));
        prop_assert!((0.0..=1.0).contains(&na));
        if a < b {
            prop_assert!(na < nb);
        }
        prop_assert!((denormalize_value(na) - a).abs() < 1e-12);
    }

    #[test]
    fn comparison_mirror(c in 1i64..=5) {
        let sum = comparison_to_raw(c, Role::A).unwrap() + comparison_to_raw(c, Role::B).unwrap();
        prop_assert_eq!(sum, 6.0);
    }

    #[test]
    fn huber_derivative_matches_finite_difference(e in -5.0f64..5.0, delta in 0.1f64..3.0) {
        prop_assume!((e.abs() - delta).abs() > 1e-3);
        let h = 1e-6;
        let numeric = (huber(e + h, 0.0, delta).unwrap() - huber(e - h, 0.0, delta).unwrap()) / (2.0 * h);
        let analytic = if e.abs() <= delta { e } else { delta * e.signum() };
        prop_assert!((numeric - analytic).abs() < 1e-6, "{} vs {}", numeric, analytic);
        prop_assert!(huber(e, 0.0, delta).unwrap() >= 0.0);
    }

    #[test]
    fn stub_judge_stays_in_unit_cube(q in "\\PC{1,40}", o in "\\PC{1,80}", s in "\\PC{1,200}") {
        prop_assume!(!q.trim().is_empty() && !o.trim().is_empty() && !s.trim().is_empty());
        let v = StubJudge.score(&JudgeRequest::new(q, o, s).unwrap()).unwrap();
        for x in v.to_array() {
            prop_assert!((0.0..=1.0).contains(&x));
        }
    }

    #[test]
    fn parse_line_never_panics(kind in 0usize..4, line in "\\PC{0,200}") {
        let _ = parse_line(RecordKind::ALL[kind], &line);
    }

    #[test]
    fn corpus_round_trips(texts in prop::collection::vec("[a-zA-Z ,.'\"\\\\]{1,40}", 1..20), times in prop::collection::vec(prop::option::of(0u32..1000), 20)) {
        prop_assume!(texts.iter().all(|t| !t.trim().is_empty()));
        let mut corpus = Corpus::new();
        corpus.insert(Record::Question(Question {
            id: "q".into(),
            text: "Question?".into(),
            qtype: QuestionType::OpenEnded,
            topic_label: "t".into(),
        })).unwrap();
        for (i, t) in texts.iter().enumerate() {
            corpus.insert(Record::Opinion(Opinion {
                id: format!("o{i}"),
                question_id: "q".into(),
                text: t.clone(),
                minority_flag: [MinorityFlag::Yes, MinorityFlag::No, MinorityFlag::Unsure, MinorityFlag::Unasked][i % 4],
                completion_seconds: times[i].map(f64::from),
                position_seed: Some(i as i64 - 3),
            })).unwrap();
        }
        let dir = tempfile::tempdir().unwrap();
        let (qp, op) = (dir.path().join("q.jsonl"), dir.path().join("o.jsonl"));
        corpus.write_kind(&qp, RecordKind::Questions).unwrap();
        corpus.write_kind(&op, RecordKind::Opinions).unwrap();
        let mut back = Corpus::new();
        prop_assert!(back.ingest_file(&qp, RecordKind::Questions).unwrap().is_clean());
        prop_assert!(back.ingest_file(&op, RecordKind::Opinions).unwrap().is_clean());
        prop_assert_eq!(back.questions, corpus.questions);
        prop_assert_eq!(back.opinions, corpus.opinions);
    }

    #[test]
    fn qc_filter_partitions(times in prop::collection::vec(prop::option::of(0.0f64..100.0), 0..50), t in 0.0f64..100.0) {
        let ops: Vec<Opinion> = times.iter().enumerate().map(|(i, &s)| Opinion {
            id: format!("o{i}"),
            question_id: "q".into(),
            text: "x".into(),
            minority_flag: MinorityFlag::Unasked,
            completion_seconds: s,
            position_seed: None,
        }).collect();
        let (kept, dropped) = qc_filter(ops.clone(), t);
        prop_assert_eq!(kept.len() + dropped.len(), ops.len());
        prop_assert!(kept.iter().all(|o| o.completion_seconds.is_none_or(|s| s >= t)));
        prop_assert!(dropped.iter().all(|o| o.completion_seconds.is_some_and(|s| s < t)));
        let order: Vec<&Opinion> = ops.iter().filter(|o| kept.contains(o)).collect();
        prop_assert_eq!(order, kept.iter().collect::<Vec<_>>());
    }

    #[test]
    fn subsets_draw_distinct_pool_members(pool in 1usize..60, seed: u64) {
        let ops: Vec<Opinion> = (0..pool).map(|i| Opinion {
            id: format!("o{i:03}"),
            question_id: "q".into(),
            text: "x".into(),
            minority_flag: MinorityFlag::Unasked,
            completion_seconds: None,
            position_seed: None,
        }).collect();
        let sizes: Vec<usize> = [1, 5, 10, 30].into_iter().filter(|&s| s <= pool).collect();
        let plan = SubsetPlan { question_id: "q".into(), sizes: sizes.clone(), resamples_per_size: 3, seed };
        let subsets = build_subsets(&ops, &plan).unwrap();
        prop_assert_eq!(subsets.len(), sizes.len());
        for s in &subsets {
            prop_assert!(s.check().is_ok());
            prop_assert!(s.member_opinion_ids.iter().all(|m| ops.iter().any(|o| &o.id == m)));
        }
        prop_assert_eq!(build_subsets(&ops, &plan).unwrap(), subsets);
    }

    #[test]
    fn ci_matches_brute_force(values in prop::collection::vec(0.0f64..1.0, 2..60)) {
        let ci = ci_half_width(&values, 0.95).unwrap();
        prop_assert!(ci >= 0.0);
        prop_assert!((ci - oracle::ci95(&values)).abs() < 1e-9);
    }
}
