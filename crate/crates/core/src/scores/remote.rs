use super::wire::{parse_batch_response, parse_response, ScoreRequest};
use super::{Judge, JudgeError, JudgeRequest, ScoreVector};
use crate::chat::{json_agent, read_ok_body, RetryPolicy, TransportError};
use std::sync::Mutex;
use std::time::Duration;

/// Client for a judge served over HTTP (`/score`, `/score_batch`).
#[derive(Debug)]
pub struct RemoteJudge {
    agent: ureq::Agent,
    base_url: String,
    retry: RetryPolicy,
    /// `model_version` reported by the most recent response.
    last_version: Mutex<Option<String>>,
}

impl RemoteJudge {
    pub fn new(base_url: &str, timeout: Duration, retry: RetryPolicy) -> Self {
        Self {
            agent: json_agent(timeout),
            base_url: base_url.trim_end_matches('/').to_string(),
            retry,
            last_version: Mutex::new(None),
        }
    }

    pub fn model_version(&self) -> Option<String> {
        self.last_version.lock().expect("version lock").clone()
    }

    fn post(&self, path: &str, body: &serde_json::Value) -> Result<String, TransportError> {
        let url = format!("{}{path}", self.base_url);
        self.retry
            .run(|_| read_ok_body(self.agent.post(&url).send_json(body)?))
    }

    fn record_version(&self, version: &str) {
        *self.last_version.lock().expect("version lock") = Some(version.to_string());
    }
}

impl Judge for RemoteJudge {
    fn id(&self) -> String {
        match self.model_version() {
            Some(v) => format!("remote:{v}"),
            None => "remote".to_string(),
        }
    }

    fn score(&self, request: &JudgeRequest) -> Result<ScoreVector, JudgeError> {
        request.validate()?;
        let body = serde_json::to_value(ScoreRequest::from(request)).expect("request serializes");
        let resp = parse_response(&self.post("/score", &body)?)?;
        self.record_version(&resp.model_version);
        resp.to_score()
    }

    fn score_batch(&self, requests: &[JudgeRequest]) -> Result<Vec<ScoreVector>, JudgeError> {
        if requests.is_empty() {
            return Ok(Vec::new());
        }
        for r in requests {
            r.validate()?;
        }
        let wire: Vec<ScoreRequest> = requests.iter().map(ScoreRequest::from).collect();
        let body = serde_json::to_value(&wire).expect("request serializes");
        let items = parse_batch_response(&self.post("/score_batch", &body)?, requests.len())?;
        if let Some(last) = items.last() {
            self.record_version(&last.model_version);
        }
        items.iter().map(|r| r.to_score()).collect()
    }
}
