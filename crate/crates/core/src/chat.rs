//! Minimal chat-completion transport shared by the summarizer and the LLM judge.
//!
//! A request is a single user message plus opaque decoding parameters.
//! Provider adapters implement [`ChatBackend`]; the OpenAI-compatible HTTP
//! adapter is the only network one shipped.

use serde::{Deserialize, Serialize};
use serde_json::{Map, Value};
use std::collections::BTreeMap;
use std::sync::atomic::{AtomicU64, Ordering};
use std::time::Duration;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum TransportError {
    #[error("connection failed: {0}")]
    Connect(String),
    #[error("request timed out: {0}")]
    Timeout(String),
    #[error("server returned status {code}: {body}")]
    Status { code: u16, body: String },
    #[error("undecodable response: {0}")]
    Decode(String),
    #[error("missing credentials: environment variable `{0}` is not set")]
    MissingCredentials(String),
    #[error("request budget exhausted")]
    BudgetExhausted,
    #[error("empty completion")]
    EmptyCompletion,
}

impl TransportError {
    /// Whether another attempt could plausibly succeed.
    pub fn is_retryable(&self) -> bool {
        match self {
            TransportError::Connect(_) | TransportError::Timeout(_) | TransportError::EmptyCompletion => true,
            TransportError::Status { code, .. } => *code == 429 || *code >= 500,
            TransportError::Decode(_) | TransportError::MissingCredentials(_) | TransportError::BudgetExhausted => false,
        }
    }
}

impl From<ureq::Error> for TransportError {
    fn from(e: ureq::Error) -> Self {
        match e {
            ureq::Error::StatusCode(code) => TransportError::Status {
                code,
                body: String::new(),
            },
            ureq::Error::Timeout(t) => TransportError::Timeout(t.to_string()),
            ureq::Error::Json(e) => TransportError::Decode(e.to_string()),
            other => TransportError::Connect(other.to_string()),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChatRequest {
    pub model: String,
    pub prompt: String,
    /// Provider decoding knobs passed through verbatim (temperature, max_tokens, ...).
    #[serde(default)]
    pub params: BTreeMap<String, Value>,
    /// Decoding seed, sent only when set.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
}

pub trait ChatBackend: Send + Sync {
    fn complete(&self, request: &ChatRequest) -> Result<String, TransportError>;
}

/// OpenAI-compatible `chat/completions` adapter.
#[derive(Debug, Clone)]
pub struct HttpChatBackend {
    agent: ureq::Agent,
    endpoint: String,
    api_key: Option<String>,
}

impl HttpChatBackend {
    /// `api_key_env` names the environment variable holding the bearer token.
    pub fn new(endpoint: &str, api_key_env: Option<&str>, timeout: Duration) -> Result<Self, TransportError> {
        let api_key = match api_key_env {
            Some(var) => Some(std::env::var(var).map_err(|_| TransportError::MissingCredentials(var.to_string()))?),
            None => None,
        };
        Ok(Self {
            agent: json_agent(timeout),
            endpoint: endpoint.to_string(),
            api_key,
        })
    }

    pub fn request_body(request: &ChatRequest) -> Value {
        let mut body = Map::new();
        body.insert("model".into(), Value::String(request.model.clone()));
        body.insert(
            "messages".into(),
            serde_json::json!([{ "role": "user", "content": request.prompt }]),
        );
        for (k, v) in &request.params {
            body.insert(k.clone(), v.clone());
        }
        if let Some(seed) = request.seed {
            body.insert("seed".into(), Value::from(seed));
        }
        Value::Object(body)
    }
}

#[derive(Deserialize)]
struct CompletionResponse {
    choices: Vec<Choice>,
}

#[derive(Deserialize)]
struct Choice {
    message: ChoiceMessage,
}

#[derive(Deserialize)]
struct ChoiceMessage {
    #[serde(default)]
    content: Option<String>,
}

/// Extracts the first choice's message text from a completion response body.
pub fn parse_completion(body: &str) -> Result<String, TransportError> {
    let parsed: CompletionResponse =
        serde_json::from_str(body).map_err(|e| TransportError::Decode(e.to_string()))?;
    let text = parsed
        .choices
        .into_iter()
        .next()
        .and_then(|c| c.message.content)
        .unwrap_or_default();
    if text.trim().is_empty() {
        return Err(TransportError::EmptyCompletion);
    }
    Ok(text)
}

impl ChatBackend for HttpChatBackend {
    fn complete(&self, request: &ChatRequest) -> Result<String, TransportError> {
        let mut req = self.agent.post(&self.endpoint);
        if let Some(key) = &self.api_key {
            req = req.header("Authorization", &format!("Bearer {key}"));
        }
        let body = read_ok_body(req.send_json(Self::request_body(request))?)?;
        parse_completion(&body)
    }
}

/// Agent that reports non-2xx statuses as responses so bodies can be surfaced.
pub(crate) fn json_agent(timeout: Duration) -> ureq::Agent {
    ureq::Agent::config_builder()
        .timeout_global(Some(timeout))
        .http_status_as_error(false)
        .build()
        .into()
}

pub(crate) fn read_ok_body(mut resp: ureq::http::Response<ureq::Body>) -> Result<String, TransportError> {
    let status = resp.status().as_u16();
    let body = resp.body_mut().read_to_string().map_err(TransportError::from)?;
    if !(200..300).contains(&status) {
        return Err(TransportError::Status { code: status, body });
    }
    Ok(body)
}

/// Exponential backoff: attempt `i` (0-based) that fails waits `base * 2^i`, capped.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RetryPolicy {
    pub max_retries: u32,
    #[serde(with = "millis")]
    pub base_delay: Duration,
    #[serde(with = "millis")]
    pub max_delay: Duration,
}

impl Default for RetryPolicy {
    fn default() -> Self {
        Self {
            max_retries: 3,
            base_delay: Duration::from_millis(500),
            max_delay: Duration::from_secs(30),
        }
    }
}

impl RetryPolicy {
    pub fn no_delay(max_retries: u32) -> Self {
        Self {
            max_retries,
            base_delay: Duration::ZERO,
            max_delay: Duration::ZERO,
        }
    }

    pub fn delay_for(&self, attempt: u32) -> Duration {
        let factor = 1u32.checked_shl(attempt.min(31)).unwrap_or(u32::MAX);
        self.base_delay.saturating_mul(factor).min(self.max_delay)
    }

    /// Runs `op` until it succeeds, fails with a non-retryable error, or the
    /// retry budget is spent. `op` receives the attempt number.
    pub fn run<T>(&self, mut op: impl FnMut(u32) -> Result<T, TransportError>) -> Result<T, TransportError> {
        let mut attempt = 0;
        loop {
            match op(attempt) {
                Ok(v) => return Ok(v),
                Err(e) if e.is_retryable() && attempt < self.max_retries => {
                    std::thread::sleep(self.delay_for(attempt));
                    attempt += 1;
                }
                Err(e) => return Err(e),
            }
        }
    }
}

mod millis {
    use serde::{Deserialize, Deserializer, Serializer};
    use std::time::Duration;

    pub fn serialize<S: Serializer>(d: &Duration, s: S) -> Result<S::Ok, S::Error> {
        s.serialize_u64(d.as_millis() as u64)
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<Duration, D::Error> {
        u64::deserialize(d).map(Duration::from_millis)
    }
}

/// Cap on network requests for a whole run, shared across workers.
#[derive(Debug, Default)]
pub struct RequestBudget {
    remaining: Option<AtomicU64>,
}

impl RequestBudget {
    pub fn unlimited() -> Self {
        Self { remaining: None }
    }

    pub fn limited(n: u64) -> Self {
        Self {
            remaining: Some(AtomicU64::new(n)),
        }
    }

    /// Consumes one request slot.
    pub fn take(&self) -> Result<(), TransportError> {
        match &self.remaining {
            None => Ok(()),
            Some(r) => r
                .fetch_update(Ordering::SeqCst, Ordering::SeqCst, |v| v.checked_sub(1))
                .map(|_| ())
                .map_err(|_| TransportError::BudgetExhausted),
        }
    }
}
