//! Lexical stand-in judge for deterministic end-to-end runs.
//!
//! - rep: fraction of the opinion's distinct tokens that also occur in the summary.
//! - inf: summary type-token ratio, damped for short summaries.
//! - neu: one minus the imbalance between supportive and opposing stance words.
//! - pol: mean of the other three.
//!
//! None of this is calibrated against human labels.

use super::{Judge, JudgeError, JudgeRequest, ScoreVector};
use std::collections::HashSet;

/// Summary length (in tokens) at which the informativeness damping reaches 1 - 1/e.
const LENGTH_SCALE: f64 = 40.0;

const SUPPORT_WORDS: &[&str] = &[
    "agree", "approve", "benefit", "beneficial", "favor", "favour", "good", "help", "helps", "positive", "should",
    "support", "supports", "yes",
];

const OPPOSE_WORDS: &[&str] = &[
    "against", "bad", "disagree", "harm", "harmful", "hurt", "negative", "no", "not", "oppose", "opposes",
    "shouldn't", "reject",
];

#[derive(Debug, Clone, Copy, Default)]
pub struct StubJudge;

/// Lowercased alphanumeric tokens (apostrophes kept inside words).
pub(crate) fn tokens(text: &str) -> Vec<String> {
    text.split(|c: char| !(c.is_alphanumeric() || c == '\''))
        .map(|t| t.trim_matches('\'').to_lowercase())
        .filter(|t| !t.is_empty())
        .collect()
}

impl StubJudge {
    pub fn representativeness(opinion: &str, summary: &str) -> f64 {
        let op: HashSet<String> = tokens(opinion).into_iter().collect();
        if op.is_empty() {
            return 0.0;
        }
        let sm: HashSet<String> = tokens(summary).into_iter().collect();
        op.intersection(&sm).count() as f64 / op.len() as f64
    }

    pub fn informativeness(summary: &str) -> f64 {
        let toks = tokens(summary);
        if toks.is_empty() {
            return 0.0;
        }
        let types: HashSet<&String> = toks.iter().collect();
        let ttr = types.len() as f64 / toks.len() as f64;
        ttr * (1.0 - (-(toks.len() as f64) / LENGTH_SCALE).exp())
    }

    pub fn neutrality(summary: &str) -> f64 {
        let (mut pos, mut neg) = (0usize, 0usize);
        for t in tokens(summary) {
            if SUPPORT_WORDS.contains(&t.as_str()) {
                pos += 1;
            } else if OPPOSE_WORDS.contains(&t.as_str()) {
                neg += 1;
            }
        }
        if pos + neg == 0 {
            return 1.0;
        }
        1.0 - pos.abs_diff(neg) as f64 / (pos + neg) as f64
    }
}

impl Judge for StubJudge {
    fn id(&self) -> String {
        "stub".to_string()
    }

    fn score(&self, request: &JudgeRequest) -> Result<ScoreVector, JudgeError> {
        request.validate()?;
        let rep = Self::representativeness(&request.opinion_text, &request.summary_text);
        let inf = Self::informativeness(&request.summary_text);
        let neu = Self::neutrality(&request.summary_text);
        let pol = (rep + inf + neu) / 3.0;
        ScoreVector::new(rep, inf, neu, pol).map_err(|e| JudgeError::Contract(e.to_string()))
    }
}
