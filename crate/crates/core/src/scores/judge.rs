use super::ScoreVector;
use crate::chat::TransportError;
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum JudgeError {
    #[error("invalid judge request: {0} is empty")]
    InvalidRequest(&'static str),
    #[error("judge transport failure: {0}")]
    Transport(#[from] TransportError),
    #[error("judge response violates the score contract: {0}")]
    Contract(String),
    #[error("unparseable judge output ({reason}): {raw}")]
    Unparseable { raw: String, reason: String },
}

/// The `(question, opinion, summary)` triple a judge scores.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct JudgeRequest {
    pub question_text: String,
    pub opinion_text: String,
    pub summary_text: String,
}

impl JudgeRequest {
    pub fn new(
        question_text: impl Into<String>,
        opinion_text: impl Into<String>,
        summary_text: impl Into<String>,
    ) -> Result<Self, JudgeError> {
        let req = Self {
            question_text: question_text.into(),
            opinion_text: opinion_text.into(),
            summary_text: summary_text.into(),
        };
        req.validate()?;
        Ok(req)
    }

    pub fn validate(&self) -> Result<(), JudgeError> {
        for (name, v) in [
            ("question", &self.question_text),
            ("opinion", &self.opinion_text),
            ("summary", &self.summary_text),
        ] {
            if v.trim().is_empty() {
                return Err(JudgeError::InvalidRequest(name));
            }
        }
        Ok(())
    }
}

/// Maps a `(question, opinion, summary)` triple to a score in `[0,1]^4`.
pub trait Judge: Send + Sync {
    /// Identifier recorded alongside produced scores.
    fn id(&self) -> String;

    fn score(&self, request: &JudgeRequest) -> Result<ScoreVector, JudgeError>;

    /// Scores several requests; output is aligned with input.
    fn score_batch(&self, requests: &[JudgeRequest]) -> Result<Vec<ScoreVector>, JudgeError> {
        requests.iter().map(|r| self.score(r)).collect()
    }
}

impl<J: Judge + ?Sized> Judge for std::sync::Arc<J> {
    fn id(&self) -> String {
        (**self).id()
    }

    fn score(&self, request: &JudgeRequest) -> Result<ScoreVector, JudgeError> {
        (**self).score(request)
    }

    fn score_batch(&self, requests: &[JudgeRequest]) -> Result<Vec<ScoreVector>, JudgeError> {
        (**self).score_batch(requests)
    }
}
