//! Four-dimensional quality scores, label scales and judges.
//!
//! Human labels live on a raw scale: ratings on `[1,5]`, comparisons mapped
//! onto `{-1,1,3,5,7}`. Both are normalized to `[0,1]` with
//! `y = (y_raw + 1) / 8`, the scale every judge emits.

mod judge;
mod llm;
mod remote;
mod stub;
pub mod wire;

pub use judge::{Judge, JudgeError, JudgeRequest};
pub use llm::{judge_prompt, parse_judge_output, LlmJudge};
pub use remote::RemoteJudge;
pub use stub::StubJudge;

use crate::corpus::{AnnotationRecord, Corpus, TaskKind};
use serde::{Deserialize, Serialize};
use std::fmt;

/// Lower end of the raw supervision scale.
pub const RAW_MIN: f64 = -1.0;
/// Upper end of the raw supervision scale.
pub const RAW_MAX: f64 = 7.0;
/// Huber threshold used for judge training.
pub const DEFAULT_HUBER_DELTA: f64 = 1.0;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum ScoreError {
    #[error("{dimension} = {value} outside [0,1]")]
    OutOfRange { dimension: Dimension, value: f64 },
    #[error("raw value {0} outside [-1,7]")]
    RawOutOfRange(f64),
    #[error("rating supervision {0} outside [1,5]")]
    RatingOutOfRange(f64),
    #[error("comparison label {0} out of [1,5]")]
    ComparisonOutOfRange(i64),
    #[error("huber delta must be positive, got {0}")]
    NonPositiveDelta(f64),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Dimension {
    Rep,
    Inf,
    Neu,
    Pol,
}

impl Dimension {
    pub const ALL: [Dimension; 4] = [Dimension::Rep, Dimension::Inf, Dimension::Neu, Dimension::Pol];

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn short(self) -> &'static str {
        match self {
            Dimension::Rep => "rep",
            Dimension::Inf => "inf",
            Dimension::Neu => "neu",
            Dimension::Pol => "pol",
        }
    }

    pub fn label(self) -> &'static str {
        match self {
            Dimension::Rep => "Representativeness",
            Dimension::Inf => "Informativeness",
            Dimension::Neu => "Neutrality",
            Dimension::Pol => "Policy Approval",
        }
    }

    /// Key used by the structured judge output format.
    pub fn output_key(self) -> &'static str {
        match self {
            Dimension::Rep => "perspective_representation",
            Dimension::Inf => "informativeness",
            Dimension::Neu => "neutrality_balance",
            Dimension::Pol => "policy_approval",
        }
    }
}

impl fmt::Display for Dimension {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.short())
    }
}

/// Judge output: one value in `[0,1]` per dimension.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ScoreVector {
    pub rep: f64,
    pub inf: f64,
    pub neu: f64,
    pub pol: f64,
}

impl ScoreVector {
    pub fn new(rep: f64, inf: f64, neu: f64, pol: f64) -> Result<Self, ScoreError> {
        Self::from_array([rep, inf, neu, pol])
    }

    pub fn from_array(values: [f64; 4]) -> Result<Self, ScoreError> {
        for (d, &v) in Dimension::ALL.iter().zip(&values) {
            if !(0.0..=1.0).contains(&v) {
                return Err(ScoreError::OutOfRange { dimension: *d, value: v });
            }
        }
        let [rep, inf, neu, pol] = values;
        Ok(Self { rep, inf, neu, pol })
    }

    pub fn to_array(self) -> [f64; 4] {
        [self.rep, self.inf, self.neu, self.pol]
    }

    pub fn get(&self, d: Dimension) -> f64 {
        self.to_array()[d.index()]
    }

    pub fn validate(&self) -> Result<(), ScoreError> {
        Self::from_array(self.to_array()).map(|_| ())
    }
}

/// Which side of a judgment a supervision vector came from.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SupervisionSource {
    Rating,
    ComparisonAsA,
    ComparisonAsB,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Role {
    A,
    B,
}

/// A human label on the raw `[-1,7]` scale.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RawSupervision {
    pub values: [f64; 4],
    pub source: SupervisionSource,
}

impl RawSupervision {
    pub fn new(values: [f64; 4], source: SupervisionSource) -> Result<Self, ScoreError> {
        for &v in &values {
            if !(RAW_MIN..=RAW_MAX).contains(&v) {
                return Err(ScoreError::RawOutOfRange(v));
            }
            if source == SupervisionSource::Rating && !(1.0..=5.0).contains(&v) {
                return Err(ScoreError::RatingOutOfRange(v));
            }
        }
        Ok(Self { values, source })
    }

    /// Ratings stay on their own five-point scale.
    pub fn from_rating(raw: [u8; 4]) -> Result<Self, ScoreError> {
        Self::new(raw.map(f64::from), SupervisionSource::Rating)
    }

    pub fn from_comparison(raw: [u8; 4], role: Role) -> Result<Self, ScoreError> {
        let mut values = [0.0; 4];
        for (slot, c) in values.iter_mut().zip(raw) {
            *slot = comparison_to_raw(i64::from(c), role)?;
        }
        let source = match role {
            Role::A => SupervisionSource::ComparisonAsA,
            Role::B => SupervisionSource::ComparisonAsB,
        };
        Self::new(values, source)
    }
}

/// Maps a five-point comparison label onto the raw scale for one summary.
///
/// Label 1 strongly favours B and 5 strongly favours A. Summary A receives
/// `2(c-1) - 1`; summary B receives the mirror `2(5-c) - 1`, so a tie (3)
/// gives both summaries 3 and the two roles always sum to 6.
pub fn comparison_to_raw(c: i64, role: Role) -> Result<f64, ScoreError> {
    if !(1..=5).contains(&c) {
        return Err(ScoreError::ComparisonOutOfRange(c));
    }
    let v = match role {
        Role::A => 2 * (c - 1) - 1,
        Role::B => 2 * (5 - c) - 1,
    };
    Ok(v as f64)
}

/// Min-max maps one raw value from `[-1,7]` to `[0,1]`.
pub fn normalize_value(raw: f64) -> f64 {
    (raw - RAW_MIN) / (RAW_MAX - RAW_MIN)
}

/// Inverse of [`normalize_value`].
pub fn denormalize_value(score: f64) -> f64 {
    score * (RAW_MAX - RAW_MIN) + RAW_MIN
}

pub fn normalize(raw: &RawSupervision) -> ScoreVector {
    let [rep, inf, neu, pol] = raw.values.map(normalize_value);
    ScoreVector { rep, inf, neu, pol }
}

pub fn denormalize(s: &ScoreVector) -> [f64; 4] {
    s.to_array().map(denormalize_value)
}

/// Huber loss of a single prediction.
pub fn huber(pred: f64, target: f64, delta: f64) -> Result<f64, ScoreError> {
    if delta.is_nan() || delta <= 0.0 {
        return Err(ScoreError::NonPositiveDelta(delta));
    }
    let e = (pred - target).abs();
    Ok(if e <= delta {
        0.5 * e * e
    } else {
        delta * (e - 0.5 * delta)
    })
}

/// Huber loss averaged over the four dimensions.
pub fn huber_vector(pred: &[f64; 4], target: &[f64; 4], delta: f64) -> Result<f64, ScoreError> {
    let mut sum = 0.0;
    for (p, t) in pred.iter().zip(target) {
        sum += huber(*p, *t, delta)?;
    }
    Ok(sum / 4.0)
}

/// Mean over instances of the dimension-averaged Huber loss.
pub fn huber_batch(preds: &[[f64; 4]], targets: &[[f64; 4]], delta: f64) -> Result<f64, ScoreError> {
    assert_eq!(preds.len(), targets.len(), "prediction/target count mismatch");
    if preds.is_empty() {
        return Ok(0.0);
    }
    let mut sum = 0.0;
    for (p, t) in preds.iter().zip(targets) {
        sum += huber_vector(p, t, delta)?;
    }
    Ok(sum / preds.len() as f64)
}

/// One normalized regression target derived from an annotation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Supervision {
    pub question_id: String,
    pub opinion_id: String,
    pub summary_id: String,
    pub raw: RawSupervision,
}

/// Expands an annotation into per-summary supervision: one instance for a
/// rating, two (A and mirrored B) for a comparison.
pub fn supervision_from_annotation(a: &AnnotationRecord) -> Result<Vec<Supervision>, ScoreError> {
    let make = |summary_id: &str, raw| Supervision {
        question_id: a.question_id.clone(),
        opinion_id: a.opinion_id.clone(),
        summary_id: summary_id.to_string(),
        raw,
    };
    match a.task_kind {
        TaskKind::Rating => {
            let raw = a.rating_raw.ok_or(ScoreError::RatingOutOfRange(f64::NAN))?;
            Ok(vec![make(&a.summary_a_id, RawSupervision::from_rating(raw)?)])
        }
        TaskKind::Comparison => {
            let raw = a.comparison_raw.ok_or(ScoreError::ComparisonOutOfRange(0))?;
            let b = a.summary_b_id.as_deref().unwrap_or_default();
            Ok(vec![
                make(&a.summary_a_id, RawSupervision::from_comparison(raw, Role::A)?),
                make(b, RawSupervision::from_comparison(raw, Role::B)?),
            ])
        }
    }
}

/// Per-source instance weights for training export.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SupervisionWeights {
    pub rating: f64,
    pub comparison: f64,
}

impl Default for SupervisionWeights {
    fn default() -> Self {
        Self {
            rating: 1.0,
            comparison: 1.0,
        }
    }
}

/// Training instance consumed by the judge trainer (line-delimited JSON).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrainInstance {
    pub question: String,
    pub opinion: String,
    pub summary: String,
    pub target: [f64; 4],
    #[serde(default = "unit_weight")]
    pub weight: f64,
}

fn unit_weight() -> f64 {
    1.0
}

/// Builds normalized training instances from every annotation in the corpus.
/// Annotations whose referenced texts are missing are skipped.
pub fn train_instances(corpus: &Corpus, weights: SupervisionWeights) -> Result<Vec<TrainInstance>, ScoreError> {
    let mut out = Vec::new();
    for a in &corpus.annotations {
        let weight = match a.task_kind {
            TaskKind::Rating => weights.rating,
            TaskKind::Comparison => weights.comparison,
        };
        for s in supervision_from_annotation(a)? {
            let (Some(q), Some(o), Some(summary)) = (
                corpus.question(&s.question_id),
                corpus.opinion(&s.opinion_id),
                corpus.summary(&s.summary_id),
            ) else {
                continue;
            };
            out.push(TrainInstance {
                question: q.text.clone(),
                opinion: o.text.clone(),
                summary: summary.text.clone(),
                target: normalize(&s.raw).to_array(),
                weight,
            });
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn comparison_tie_and_endpoints() {
        assert_eq!(comparison_to_raw(3, Role::A).unwrap(), 3.0);
        assert_eq!(comparison_to_raw(3, Role::B).unwrap(), 3.0);
        assert_eq!(comparison_to_raw(5, Role::A).unwrap(), 7.0);
        assert_eq!(comparison_to_raw(5, Role::B).unwrap(), -1.0);
        assert_eq!(comparison_to_raw(1, Role::A).unwrap(), -1.0);
        assert_eq!(comparison_to_raw(1, Role::B).unwrap(), 7.0);
        assert!(comparison_to_raw(0, Role::A).is_err());
        assert!(comparison_to_raw(6, Role::B).is_err());
    }

    #[test]
    fn comparison_points_evenly_spaced() {
        let a: Vec<f64> = (1..=5).map(|c| comparison_to_raw(c, Role::A).unwrap()).collect();
        assert_eq!(a, vec![-1.0, 1.0, 3.0, 5.0, 7.0]);
    }

    #[test]
    fn normalize_fixed_points() {
        assert_eq!(normalize_value(7.0), 1.0);
        assert_eq!(normalize_value(-1.0), 0.0);
        assert_eq!(normalize_value(3.0), 0.5);
        assert_eq!(normalize_value(5.0), 0.75);
        assert_eq!(normalize_value(1.0), 0.25);
    }

    #[test]
    fn denormalize_fixed_points() {
        assert_eq!(denormalize_value(0.5), 3.0);
        assert_eq!(denormalize_value(1.0), 7.0);
        assert_eq!(denormalize_value(0.25), 1.0);
    }

    #[test]
    fn rating_normalizes_into_middle_band() {
        let raw = RawSupervision::from_rating([1, 5, 3, 2]).unwrap();
        assert_eq!(normalize(&raw).to_array(), [0.25, 0.75, 0.5, 0.375]);
    }

    #[test]
    fn raw_supervision_bounds() {
        assert!(RawSupervision::new([7.0, -1.0, 3.0, 3.0], SupervisionSource::ComparisonAsA).is_ok());
        assert!(RawSupervision::new([7.5, 0.0, 0.0, 0.0], SupervisionSource::ComparisonAsA).is_err());
        assert!(RawSupervision::new([0.0, 3.0, 3.0, 3.0], SupervisionSource::Rating).is_err());
    }

    #[test]
    fn huber_branches() {
        assert_eq!(huber(0.5, 0.0, 1.0).unwrap(), 0.125);
        assert_eq!(huber(0.0, 2.0, 1.0).unwrap(), 1.5);
        assert_eq!(huber(1.0, 0.0, 1.0).unwrap(), 0.5);
        assert_eq!(huber(3.0, 3.0, 1.0).unwrap(), 0.0);
        assert!(huber(1.0, 0.0, 0.0).is_err());
        assert!(huber(1.0, 0.0, -1.0).is_err());
        assert!(huber(1.0, 0.0, f64::NAN).is_err());
    }

    #[test]
    fn huber_vector_averages_dimensions() {
        let l = huber_vector(&[0.5, 0.0, 2.0, 0.0], &[0.0; 4], 1.0).unwrap();
        assert_eq!(l, (0.125 + 0.0 + 1.5 + 0.0) / 4.0);
        assert_eq!(huber_batch(&[], &[], 1.0).unwrap(), 0.0);
    }

    #[test]
    fn score_vector_range_enforced() {
        assert!(ScoreVector::new(0.0, 1.0, 0.5, 0.2).is_ok());
        assert!(matches!(
            ScoreVector::new(0.0, 1.2, 0.5, 0.2),
            Err(ScoreError::OutOfRange { dimension: Dimension::Inf, .. })
        ));
        assert!(ScoreVector::new(f64::NAN, 0.0, 0.0, 0.0).is_err());
    }

    #[test]
    fn annotation_expands_to_two_mirrored_instances() {
        let a = AnnotationRecord {
            annotator_id: "a".into(),
            question_id: "q".into(),
            opinion_id: "o".into(),
            summary_a_id: "sa".into(),
            summary_b_id: Some("sb".into()),
            rating_raw: None,
            comparison_raw: Some([5, 1, 3, 4]),
            task_kind: TaskKind::Comparison,
            completion_seconds: None,
        };
        let sup = supervision_from_annotation(&a).unwrap();
        assert_eq!(sup.len(), 2);
        assert_eq!(sup[0].summary_id, "sa");
        assert_eq!(sup[0].raw.values, [7.0, -1.0, 3.0, 5.0]);
        assert_eq!(sup[1].summary_id, "sb");
        assert_eq!(sup[1].raw.values, [-1.0, 7.0, 3.0, 1.0]);
    }
}
