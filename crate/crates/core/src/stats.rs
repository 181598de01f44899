//! Agreement between judge and human labels.

use crate::aggregate::dim_mean;
use crate::corpus::{Corpus, TaskKind};
use crate::scores::{normalize, Dimension, Judge, JudgeError, JudgeRequest, RawSupervision, ScoreVector};
use serde::{Deserialize, Serialize};
use std::collections::{BTreeMap, BTreeSet};
use std::time::Instant;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum StatsError {
    #[error("series `{name}` has mismatched lengths {x} and {y}")]
    LengthMismatch { name: String, x: usize, y: usize },
    #[error("series `{name}` needs at least 2 points, has {n}")]
    TooShort { name: String, n: usize },
    #[error("correlation undefined for `{0}`: zero variance")]
    ZeroVariance(String),
    #[error("model sets differ: {0}")]
    KeyMismatch(String),
    #[error("timing needs at least one request")]
    NoRequests,
}

/// Human (`x`) and judge (`y`) values on one dimension.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PairedSeries {
    pub name: String,
    pub x: Vec<f64>,
    pub y: Vec<f64>,
    pub dimension: Dimension,
}

impl PairedSeries {
    pub fn new(name: impl Into<String>, dimension: Dimension, x: Vec<f64>, y: Vec<f64>) -> Result<Self, StatsError> {
        let s = Self {
            name: name.into(),
            x,
            y,
            dimension,
        };
        s.check()?;
        Ok(s)
    }

    fn check(&self) -> Result<(), StatsError> {
        if self.x.len() != self.y.len() {
            return Err(StatsError::LengthMismatch {
                name: self.name.clone(),
                x: self.x.len(),
                y: self.y.len(),
            });
        }
        if self.x.len() < 2 {
            return Err(StatsError::TooShort {
                name: self.name.clone(),
                n: self.x.len(),
            });
        }
        Ok(())
    }
}

fn pearson_raw(name: &str, x: &[f64], y: &[f64]) -> Result<f64, StatsError> {
    let n = x.len() as f64;
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let (mut sxy, mut sxx, mut syy) = (0.0, 0.0, 0.0);
    for (a, b) in x.iter().zip(y) {
        let (dx, dy) = (a - mx, b - my);
        sxy += dx * dy;
        sxx += dx * dx;
        syy += dy * dy;
    }
    if sxx == 0.0 || syy == 0.0 {
        return Err(StatsError::ZeroVariance(name.to_string()));
    }
    Ok((sxy / (sxx.sqrt() * syy.sqrt())).clamp(-1.0, 1.0))
}

/// Product-moment correlation.
pub fn pearson(series: &PairedSeries) -> Result<f64, StatsError> {
    series.check()?;
    pearson_raw(&series.name, &series.x, &series.y)
}

/// 1-based ranks; tied values share the average of the positions they span.
pub fn average_ranks(values: &[f64]) -> Vec<f64> {
    let mut order: Vec<usize> = (0..values.len()).collect();
    order.sort_by(|&a, &b| values[a].total_cmp(&values[b]));
    let mut ranks = vec![0.0; values.len()];
    let mut i = 0;
    while i < order.len() {
        let mut j = i;
        while j + 1 < order.len() && values[order[j + 1]] == values[order[i]] {
            j += 1;
        }
        let rank = (i + j) as f64 / 2.0 + 1.0;
        for &idx in &order[i..=j] {
            ranks[idx] = rank;
        }
        i = j + 1;
    }
    ranks
}

/// Rank correlation: Pearson on average ranks.
pub fn spearman(series: &PairedSeries) -> Result<f64, StatsError> {
    series.check()?;
    pearson_raw(&series.name, &average_ranks(&series.x), &average_ranks(&series.y))
}

/// Spearman correlation between human and judge per-model means.
pub fn model_rank_correlation(
    human_means: &BTreeMap<String, f64>,
    judge_means: &BTreeMap<String, f64>,
) -> Result<f64, StatsError> {
    if human_means.len() != judge_means.len() || human_means.keys().ne(judge_means.keys()) {
        let only_h: Vec<&String> = human_means.keys().filter(|k| !judge_means.contains_key(*k)).collect();
        let only_j: Vec<&String> = judge_means.keys().filter(|k| !human_means.contains_key(*k)).collect();
        return Err(StatsError::KeyMismatch(format!(
            "only in human: {only_h:?}; only in judge: {only_j:?}"
        )));
    }
    let series = PairedSeries::new(
        "model ranking",
        Dimension::Rep,
        human_means.values().copied().collect(),
        judge_means.values().copied().collect(),
    )?;
    spearman(&series)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TimingSample {
    pub judge_id: String,
    pub seconds_per_item: f64,
    pub items: usize,
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
#[error("judge failed after {completed} items: {error}")]
pub struct PartialTiming {
    pub completed: usize,
    /// Timing over the items that did complete, when any were timed.
    pub partial: Option<TimingSample>,
    pub error: JudgeError,
}

/// Mean wall-clock seconds per item, scoring serially. The first item is a
/// warm-up and is not timed when there is more than one.
pub fn timing_benchmark(judge: &dyn Judge, requests: &[JudgeRequest]) -> Result<TimingSample, Box<PartialTiming>> {
    if requests.is_empty() {
        return Err(Box::new(PartialTiming {
            completed: 0,
            partial: None,
            error: JudgeError::InvalidRequest("request list"),
        }));
    }
    let skip = usize::from(requests.len() > 1);
    let mut timed = 0.0;
    let mut timed_items = 0usize;
    let sample = |timed: f64, n: usize| TimingSample {
        judge_id: judge.id(),
        seconds_per_item: (timed / n as f64).max(f64::MIN_POSITIVE),
        items: n,
    };
    for (i, req) in requests.iter().enumerate() {
        let start = Instant::now();
        if let Err(error) = judge.score(req) {
            return Err(Box::new(PartialTiming {
                completed: i,
                partial: (timed_items > 0).then(|| sample(timed, timed_items)),
                error,
            }));
        }
        if i >= skip {
            timed += start.elapsed().as_secs_f64();
            timed_items += 1;
        }
    }
    Ok(sample(timed, timed_items))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DimensionAgreement {
    pub dimension: Dimension,
    pub n: usize,
    pub pearson: Option<f64>,
    pub spearman: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AlignmentReport {
    pub judge_id: String,
    /// How series were formed; printed in report headers.
    pub construction: String,
    pub rating: Vec<DimensionAgreement>,
    pub comparison: Vec<DimensionAgreement>,
}

pub const RATING_CONSTRUCTION: &str =
    "rating: normalized human rating vs judge score for (question, annotator opinion, summary); pooled over questions";
pub const COMPARISON_CONSTRUCTION: &str =
    "comparison: human comparison label (1-5) vs judge score difference A minus B; pooled over questions";

fn agreement(dimension: Dimension, x: Vec<f64>, y: Vec<f64>) -> DimensionAgreement {
    let n = x.len();
    match PairedSeries::new(dimension.short(), dimension, x, y) {
        Ok(s) => DimensionAgreement {
            dimension,
            n,
            pearson: pearson(&s).ok(),
            spearman: spearman(&s).ok(),
        },
        Err(_) => DimensionAgreement {
            dimension,
            n,
            pearson: None,
            spearman: None,
        },
    }
}

/// (opinion, summary) pairs referenced by annotations, resolvable in the corpus.
pub fn annotated_pairs(corpus: &Corpus) -> BTreeSet<(String, String)> {
    let mut out = BTreeSet::new();
    for a in &corpus.annotations {
        let ids = std::iter::once(a.summary_a_id.as_str()).chain(a.summary_b_id.as_deref());
        for s in ids {
            if corpus.opinion(&a.opinion_id).is_some() && corpus.summary(s).is_some() {
                out.insert((a.opinion_id.clone(), s.to_string()));
            }
        }
    }
    out
}

/// (opinion id, summary id).
pub type AnnotatedKey = (String, String);

/// Judge requests for [`annotated_pairs`], in the same order.
pub fn annotated_requests(corpus: &Corpus) -> Result<Vec<(AnnotatedKey, JudgeRequest)>, JudgeError> {
    let mut out = Vec::new();
    for (o, s) in annotated_pairs(corpus) {
        let (Some(opinion), Some(summary)) = (corpus.opinion(&o), corpus.summary(&s)) else {
            continue;
        };
        let Some(question) = corpus.question(&summary.question_id) else {
            continue;
        };
        let req = JudgeRequest::new(&question.text, &opinion.text, &summary.text)?;
        out.push(((o, s), req));
    }
    Ok(out)
}

/// Scores every annotated triple with `judge` and correlates with the human labels.
pub fn human_alignment(corpus: &Corpus, judge: &dyn Judge) -> Result<AlignmentReport, JudgeError> {
    let mut scores = BTreeMap::new();
    for (key, req) in annotated_requests(corpus)? {
        scores.insert(key, judge.score(&req)?);
    }
    Ok(alignment_from_scores(corpus, &judge.id(), &scores))
}

/// Correlates human labels with judge scores keyed by (opinion_id, summary_id).
/// Annotations whose triples are missing from `scores` are skipped.
pub fn alignment_from_scores(
    corpus: &Corpus,
    judge_id: &str,
    scores: &BTreeMap<(String, String), ScoreVector>,
) -> AlignmentReport {
    let score_of = |o: &str, s: &str| scores.get(&(o.to_string(), s.to_string())).copied();
    let mut rating: [(Vec<f64>, Vec<f64>); 4] = Default::default();
    let mut comparison: [(Vec<f64>, Vec<f64>); 4] = Default::default();
    for a in &corpus.annotations {
        match a.task_kind {
            TaskKind::Rating => {
                let (Some(raw), Some(score)) = (a.rating_raw, score_of(&a.opinion_id, &a.summary_a_id)) else {
                    continue;
                };
                let Ok(human) = RawSupervision::from_rating(raw) else {
                    continue;
                };
                let human = normalize(&human);
                for d in Dimension::ALL {
                    rating[d.index()].0.push(human.get(d));
                    rating[d.index()].1.push(score.get(d));
                }
            }
            TaskKind::Comparison => {
                let (Some(raw), Some(b)) = (a.comparison_raw, a.summary_b_id.as_deref()) else {
                    continue;
                };
                let (Some(sa), Some(sb)) = (score_of(&a.opinion_id, &a.summary_a_id), score_of(&a.opinion_id, b)) else {
                    continue;
                };
                for d in Dimension::ALL {
                    comparison[d.index()].0.push(f64::from(raw[d.index()]));
                    comparison[d.index()].1.push(sa.get(d) - sb.get(d));
                }
            }
        }
    }
    let collect = |series: [(Vec<f64>, Vec<f64>); 4]| {
        Dimension::ALL
            .into_iter()
            .zip(series)
            .map(|(d, (x, y))| agreement(d, x, y))
            .collect::<Vec<_>>()
    };
    AlignmentReport {
        judge_id: judge_id.to_string(),
        construction: format!("{RATING_CONSTRUCTION}; {COMPARISON_CONSTRUCTION}"),
        rating: collect(rating),
        comparison: collect(comparison),
    }
}

/// Human vs judge per-model means from rating annotations, for model-level ranking.
pub fn model_means_from_ratings(
    corpus: &Corpus,
    judge_scores: &BTreeMap<(String, String), ScoreVector>,
) -> (BTreeMap<String, f64>, BTreeMap<String, f64>) {
    let mut human: BTreeMap<String, (f64, usize)> = BTreeMap::new();
    let mut judged: BTreeMap<String, (f64, usize)> = BTreeMap::new();
    for a in &corpus.annotations {
        let (TaskKind::Rating, Some(raw)) = (a.task_kind, a.rating_raw) else {
            continue;
        };
        let Some(summary) = corpus.summary(&a.summary_a_id) else {
            continue;
        };
        let Some(judge) = judge_scores.get(&(a.opinion_id.clone(), a.summary_a_id.clone())) else {
            continue;
        };
        let Ok(h) = RawSupervision::from_rating(raw) else {
            continue;
        };
        let e = human.entry(summary.model_id.clone()).or_default();
        e.0 += dim_mean(&normalize(&h));
        e.1 += 1;
        let e = judged.entry(summary.model_id.clone()).or_default();
        e.0 += dim_mean(judge);
        e.1 += 1;
    }
    let finish = |m: BTreeMap<String, (f64, usize)>| m.into_iter().map(|(k, (s, n))| (k, s / n as f64)).collect();
    (finish(human), finish(judged))
}

/// 4x4 Pearson matrix between human dimensions (rows) and judge dimensions (columns).
pub fn correlation_matrix(human: &[ScoreVector], judge: &[ScoreVector]) -> Result<[[Option<f64>; 4]; 4], StatsError> {
    if human.len() != judge.len() {
        return Err(StatsError::LengthMismatch {
            name: "matrix".into(),
            x: human.len(),
            y: judge.len(),
        });
    }
    let mut out = [[None; 4]; 4];
    for dh in Dimension::ALL {
        for dj in Dimension::ALL {
            let x: Vec<f64> = human.iter().map(|s| s.get(dh)).collect();
            let y: Vec<f64> = judge.iter().map(|s| s.get(dj)).collect();
            out[dh.index()][dj.index()] = PairedSeries::new("matrix", dh, x, y).and_then(|s| pearson(&s)).ok();
        }
    }
    Ok(out)
}
