//! JSON bodies of the remote judge protocol.
//!
//! `POST /score` takes a [`ScoreRequest`] and returns a [`ScoreResponse`].
//! `POST /score_batch` takes a JSON array of requests and returns a JSON array
//! of responses in the same order.

use super::{JudgeError, JudgeRequest, ScoreVector};
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScoreRequest {
    pub question: String,
    pub opinion: String,
    pub summary: String,
}

impl From<&JudgeRequest> for ScoreRequest {
    fn from(r: &JudgeRequest) -> Self {
        Self {
            question: r.question_text.clone(),
            opinion: r.opinion_text.clone(),
            summary: r.summary_text.clone(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScoreResponse {
    pub rep: f64,
    pub inf: f64,
    pub neu: f64,
    pub pol: f64,
    pub model_version: String,
}

impl ScoreResponse {
    /// Checks the `[0,1]^4` contract.
    pub fn to_score(&self) -> Result<ScoreVector, JudgeError> {
        ScoreVector::new(self.rep, self.inf, self.neu, self.pol).map_err(|e| JudgeError::Contract(e.to_string()))
    }
}

pub fn parse_response(body: &str) -> Result<ScoreResponse, JudgeError> {
    serde_json::from_str(body).map_err(|e| JudgeError::Unparseable {
        raw: body.to_string(),
        reason: e.to_string(),
    })
}

pub fn parse_batch_response(body: &str, expected: usize) -> Result<Vec<ScoreResponse>, JudgeError> {
    let items: Vec<ScoreResponse> = serde_json::from_str(body).map_err(|e| JudgeError::Unparseable {
        raw: body.to_string(),
        reason: e.to_string(),
    })?;
    if items.len() != expected {
        return Err(JudgeError::Contract(format!(
            "batch of {expected} requests answered with {} responses",
            items.len()
        )));
    }
    Ok(items)
}
