//! Brute-force reference implementations used by property and acceptance tests.
//! Written for obviousness, not speed; none of the arithmetic is shared with the library.

#![allow(dead_code)]

use delibench::aggregate::TripleScore;
use delibench::rng::PortableRng;
use delibench::scores::ScoreVector;

fn distinct<T: PartialEq + Clone>(items: impl Iterator<Item = T>) -> Vec<T> {
    let mut out: Vec<T> = Vec::new();
    for i in items {
        if !out.contains(&i) {
            out.push(i);
        }
    }
    out
}

fn avg(values: &[f64]) -> f64 {
    values.iter().sum::<f64>() / values.len() as f64
}

/// Global average score by literal nested loops over a flat triple list.
pub fn gas(triples: &[TripleScore], model: &str) -> f64 {
    let mine: Vec<&TripleScore> = triples.iter().filter(|t| t.model_id == model).collect();
    let questions = distinct(mine.iter().map(|t| t.question_id.clone()));
    let mut q_means = Vec::new();
    for q in &questions {
        let in_q: Vec<&&TripleScore> = mine.iter().filter(|t| &t.question_id == q).collect();
        let subsets = distinct(in_q.iter().map(|t| t.subset_id.clone()));
        let mut s_means = Vec::new();
        for s in &subsets {
            let in_s: Vec<&&&TripleScore> = in_q.iter().filter(|t| &t.subset_id == s).collect();
            let opinions = distinct(in_s.iter().map(|t| t.opinion_id.clone()));
            let mut o_means = Vec::new();
            for o in &opinions {
                let per_resample: Vec<f64> = in_s
                    .iter()
                    .filter(|t| &t.opinion_id == o)
                    .map(|t| avg(&[t.score.rep, t.score.inf, t.score.neu, t.score.pol]))
                    .collect();
                o_means.push(avg(&per_resample));
            }
            s_means.push(avg(&o_means));
        }
        q_means.push(avg(&s_means));
    }
    avg(&q_means)
}

/// Pearson from the textbook definition with population moments.
pub fn pearson(x: &[f64], y: &[f64]) -> f64 {
    let n = x.len() as f64;
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let cov: f64 = x.iter().zip(y).map(|(a, b)| (a - mx) * (b - my)).sum::<f64>() / n;
    let vx: f64 = x.iter().map(|a| (a - mx).powi(2)).sum::<f64>() / n;
    let vy: f64 = y.iter().map(|b| (b - my).powi(2)).sum::<f64>() / n;
    cov / (vx.sqrt() * vy.sqrt())
}

/// Rank of each value by counting: smaller values plus the mean position among equals.
pub fn ranks(v: &[f64]) -> Vec<f64> {
    v.iter()
        .map(|a| {
            let less = v.iter().filter(|b| *b < a).count() as f64;
            let equal = v.iter().filter(|b| *b == a).count() as f64;
            less + (equal + 1.0) / 2.0
        })
        .collect()
}

pub fn spearman(x: &[f64], y: &[f64]) -> f64 {
    pearson(&ranks(x), &ranks(y))
}

/// Classic formula, valid only without ties.
pub fn spearman_no_ties(x: &[f64], y: &[f64]) -> f64 {
    let n = x.len() as f64;
    let (rx, ry) = (ranks(x), ranks(y));
    let d2: f64 = rx.iter().zip(&ry).map(|(a, b)| (a - b).powi(2)).sum();
    1.0 - 6.0 * d2 / (n * (n * n - 1.0))
}

/// Half-width of a normal-approximation interval, z hard-coded for 95%.
pub fn ci95(values: &[f64]) -> f64 {
    let n = values.len() as f64;
    let m = avg(values);
    let var = values.iter().map(|v| (v - m).powi(2)).sum::<f64>() / (n - 1.0);
    1.959_963_984_540_054 * var.sqrt() / n.sqrt()
}

pub fn unit(rng: &mut PortableRng) -> f64 {
    (rng.next_u64() >> 11) as f64 / (1u64 << 53) as f64
}

/// A complete random score table for one or two models: 1-3 questions, 1-3
/// sizes per question, 1-3 resamples per cell.
pub fn random_instance(seed: u64, models: &[&str]) -> Vec<TripleScore> {
    let mut rng = PortableRng::from_seed(seed);
    let mut out = Vec::new();
    let questions = 1 + rng.below(3) as usize;
    for q in 0..questions {
        let sizes = 1 + rng.below(3) as usize;
        for s in 0..sizes {
            let size = 1 + s * 2 + rng.below(2) as usize;
            let resamples = 1 + rng.below(3) as u32;
            for model in models {
                for o in 0..size {
                    for k in 1..=resamples {
                        let score = ScoreVector::new(unit(&mut rng), unit(&mut rng), unit(&mut rng), unit(&mut rng))
                            .unwrap();
                        out.push(TripleScore {
                            question_id: format!("q{q}"),
                            subset_id: format!("q{q}:n{size}"),
                            subset_size: size,
                            opinion_id: format!("q{q}-o{o}"),
                            summary_id: format!("q{q}:n{size}:{model}:r{k}"),
                            model_id: model.to_string(),
                            resample_index: k,
                            score,
                        });
                    }
                }
            }
        }
    }
    out
}
