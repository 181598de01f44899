//! Summarization prompt and cached, retried generation.

use crate::chat::{ChatBackend, ChatRequest, HttpChatBackend, RequestBudget, RetryPolicy, TransportError};
use crate::corpus::{Opinion, Question, Summary};
use crate::io::{sha256_hex, write_atomic};
use crate::rng::{derive_seed, PortableRng};
use crate::sampler::OpinionSubset;
use serde::{Deserialize, Serialize};
use serde_json::Value;
use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::Arc;
use std::time::Duration;

const PROMPT_HEAD: &str = "In each line, I provide you with human comments for a deliberation question ";
const PROMPT_INSTRUCTIONS: &str = ". At the end, generate an overall summary of the comments. \
Please do not mention the total number of comments or participants. \
If you need to provide statistical information, use percentages instead of absolute numbers.";
const COMMENTS_MARKER: &str = "Here are the comments:";

/// Endpoint value selecting the offline [`ExtractiveStub`] provider.
pub const STUB_ENDPOINT: &str = "stub:extractive";

#[derive(Debug, thiserror::Error)]
pub enum SummarizerError {
    #[error("subset `{0}` is empty")]
    EmptySubset(String),
    #[error("subset `{subset_id}` references unknown opinion `{opinion_id}`")]
    UnresolvedMember { subset_id: String, opinion_id: String },
    #[error("subset `{subset_id}` belongs to question `{subset_question}`, not `{question}`")]
    QuestionMismatch {
        subset_id: String,
        subset_question: String,
        question: String,
    },
    #[error("resample index {0} out of range")]
    BadResample(u32),
    #[error("generation for {model_id} on {subset_id} (resample {resample_index}) failed: {source}")]
    Transport {
        model_id: String,
        subset_id: String,
        resample_index: u32,
        #[source]
        source: TransportError,
    },
    #[error("cache error at {path}: {reason}")]
    Cache { path: PathBuf, reason: String },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SummarizerConfig {
    pub model_id: String,
    /// Chat-completions URL, or [`STUB_ENDPOINT`].
    pub endpoint: String,
    /// Environment variable holding the API key, if the endpoint needs one.
    #[serde(default)]
    pub api_key_env: Option<String>,
    /// Decoding knobs forwarded to the provider. Unset by default: no
    /// temperature or token limit is prescribed for generation.
    #[serde(default)]
    pub params: BTreeMap<String, Value>,
    #[serde(default = "default_retries")]
    pub max_retries: u32,
    /// Empty means the caller picks a location.
    #[serde(default)]
    pub cache_dir: PathBuf,
    #[serde(default = "default_timeout")]
    pub timeout_secs: u64,
    /// Send a per-resample decoding seed to the provider.
    #[serde(default = "default_true")]
    pub send_seed: bool,
}

fn default_retries() -> u32 {
    3
}

fn default_timeout() -> u64 {
    120
}

fn default_true() -> bool {
    true
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PromptInstance {
    pub question_id: String,
    pub subset_id: String,
    pub rendered_text: String,
}

impl PromptInstance {
    pub fn sha256(&self) -> String {
        sha256_hex(self.rendered_text.as_bytes())
    }
}

/// Fills the summarization template with the question and the subset's
/// opinions, one per line, in member order.
pub fn render_prompt<'a>(
    question: &Question,
    subset: &OpinionSubset,
    lookup: impl Fn(&str) -> Option<&'a Opinion>,
) -> Result<PromptInstance, SummarizerError> {
    render_prompt_ordered(question, subset, &subset.member_opinion_ids, lookup)
}

/// As [`render_prompt`] with an explicit member order (e.g. a presentation permutation).
pub fn render_prompt_ordered<'a>(
    question: &Question,
    subset: &OpinionSubset,
    order: &[String],
    lookup: impl Fn(&str) -> Option<&'a Opinion>,
) -> Result<PromptInstance, SummarizerError> {
    if order.is_empty() {
        return Err(SummarizerError::EmptySubset(subset.subset_id.clone()));
    }
    if subset.question_id != question.id {
        return Err(SummarizerError::QuestionMismatch {
            subset_id: subset.subset_id.clone(),
            subset_question: subset.question_id.clone(),
            question: question.id.clone(),
        });
    }
    let mut comments = Vec::with_capacity(order.len());
    for id in order {
        let opinion = lookup(id).ok_or_else(|| SummarizerError::UnresolvedMember {
            subset_id: subset.subset_id.clone(),
            opinion_id: id.clone(),
        })?;
        comments.push(single_line(&opinion.text));
    }
    let rendered_text = format!(
        "{PROMPT_HEAD}{question}{PROMPT_INSTRUCTIONS}\n\n{COMMENTS_MARKER}\n\n{comments}",
        question = question.text.trim(),
        comments = comments.join("\n"),
    );
    Ok(PromptInstance {
        question_id: question.id.clone(),
        subset_id: subset.subset_id.clone(),
        rendered_text,
    })
}

/// Collapses internal line breaks so each comment occupies one line.
fn single_line(text: &str) -> String {
    text.split_whitespace().collect::<Vec<_>>().join(" ")
}

/// Comment lines of a rendered prompt.
pub fn prompt_comments(rendered: &str) -> Vec<&str> {
    match rendered.split_once(COMMENTS_MARKER) {
        Some((_, rest)) => rest.lines().map(str::trim).filter(|l| !l.is_empty()).collect(),
        None => Vec::new(),
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CacheKey {
    pub model_id: String,
    pub prompt_sha256: String,
    pub resample_index: u32,
}

impl CacheKey {
    /// Hex digest used as the cache file stem.
    pub fn digest(&self) -> String {
        sha256_hex(&serde_json::to_vec(self).expect("cache key serializes"))
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
struct CacheEntry {
    key: CacheKey,
    text: String,
}

/// On-disk response cache, one JSON file per key.
#[derive(Debug, Clone)]
pub struct ResponseCache {
    dir: PathBuf,
}

impl ResponseCache {
    pub fn new(dir: impl Into<PathBuf>) -> Self {
        Self { dir: dir.into() }
    }

    pub fn path_for(&self, key: &CacheKey) -> PathBuf {
        self.dir.join(format!("{}.json", key.digest()))
    }

    pub fn get(&self, key: &CacheKey) -> Result<Option<String>, SummarizerError> {
        let path = self.path_for(key);
        let bytes = match std::fs::read(&path) {
            Ok(b) => b,
            Err(e) if e.kind() == std::io::ErrorKind::NotFound => return Ok(None),
            Err(e) => return Err(cache_err(&path, e)),
        };
        let entry: CacheEntry = serde_json::from_slice(&bytes).map_err(|e| cache_err(&path, e))?;
        if entry.key != *key {
            return Err(cache_err(&path, "entry key does not match its file name"));
        }
        Ok(Some(entry.text))
    }

    pub fn put(&self, key: &CacheKey, text: &str) -> Result<(), SummarizerError> {
        let path = self.path_for(key);
        let entry = CacheEntry {
            key: key.clone(),
            text: text.to_string(),
        };
        let bytes = serde_json::to_vec(&entry).map_err(|e| cache_err(&path, e))?;
        write_atomic(&path, &bytes).map_err(|e| cache_err(&path, e))
    }
}

fn cache_err(path: &Path, reason: impl ToString) -> SummarizerError {
    SummarizerError::Cache {
        path: path.to_path_buf(),
        reason: reason.to_string(),
    }
}

/// Identifier of a generated summary.
pub fn summary_id(subset_id: &str, model_id: &str, resample_index: u32) -> String {
    format!("{subset_id}:{model_id}:r{resample_index}")
}

/// Generates summaries for one model through a backend, a cache and a retry policy.
pub struct Summarizer {
    config: SummarizerConfig,
    backend: Arc<dyn ChatBackend>,
    cache: ResponseCache,
    retry: RetryPolicy,
    budget: Arc<RequestBudget>,
    network_calls: AtomicU64,
}

impl Summarizer {
    pub fn new(config: SummarizerConfig, backend: Arc<dyn ChatBackend>, budget: Arc<RequestBudget>) -> Self {
        let retry = RetryPolicy {
            max_retries: config.max_retries,
            ..RetryPolicy::default()
        };
        let cache = ResponseCache::new(&config.cache_dir);
        Self {
            config,
            backend,
            cache,
            retry,
            budget,
            network_calls: AtomicU64::new(0),
        }
    }

    /// Builds the backend named by `config.endpoint`.
    pub fn from_config(config: SummarizerConfig, budget: Arc<RequestBudget>) -> Result<Self, TransportError> {
        let backend: Arc<dyn ChatBackend> = if config.endpoint == STUB_ENDPOINT {
            Arc::new(ExtractiveStub)
        } else {
            Arc::new(HttpChatBackend::new(
                &config.endpoint,
                config.api_key_env.as_deref(),
                Duration::from_secs(config.timeout_secs),
            )?)
        };
        Ok(Self::new(config, backend, budget))
    }

    pub fn with_retry(mut self, retry: RetryPolicy) -> Self {
        self.retry = retry;
        self
    }

    pub fn config(&self) -> &SummarizerConfig {
        &self.config
    }

    /// Backend calls made so far, including failed attempts.
    pub fn network_calls(&self) -> u64 {
        self.network_calls.load(Ordering::Relaxed)
    }

    pub fn cache_key(&self, prompt: &PromptInstance, resample_index: u32) -> CacheKey {
        CacheKey {
            model_id: self.config.model_id.clone(),
            prompt_sha256: prompt.sha256(),
            resample_index,
        }
    }

    pub fn generate(&self, prompt: &PromptInstance, resample_index: u32) -> Result<Summary, SummarizerError> {
        if resample_index == 0 {
            return Err(SummarizerError::BadResample(resample_index));
        }
        let key = self.cache_key(prompt, resample_index);
        let text = match self.cache.get(&key)? {
            Some(text) => text,
            None => {
                let request = ChatRequest {
                    model: self.config.model_id.clone(),
                    prompt: prompt.rendered_text.clone(),
                    params: self.config.params.clone(),
                    seed: self
                        .config
                        .send_seed
                        .then(|| derive_seed(resample_index as u64, &[&key.prompt_sha256]) & 0x7fff_ffff),
                };
                let text = self
                    .retry
                    .run(|_| {
                        self.budget.take()?;
                        self.network_calls.fetch_add(1, Ordering::Relaxed);
                        let text = self.backend.complete(&request)?;
                        if text.trim().is_empty() {
                            return Err(TransportError::EmptyCompletion);
                        }
                        Ok(text)
                    })
                    .map_err(|source| SummarizerError::Transport {
                        model_id: self.config.model_id.clone(),
                        subset_id: prompt.subset_id.clone(),
                        resample_index,
                        source,
                    })?;
                self.cache.put(&key, &text)?;
                text
            }
        };
        Ok(Summary {
            id: summary_id(&prompt.subset_id, &self.config.model_id, resample_index),
            question_id: prompt.question_id.clone(),
            model_id: self.config.model_id.clone(),
            subset_id: prompt.subset_id.clone(),
            resample_index,
            text,
        })
    }
}

/// Offline provider: stitches together a seeded selection of the prompt's comments.
///
/// Deterministic in (prompt, seed). Used for fixtures and pipeline tests; it
/// makes no attempt at being a good summarizer.
#[derive(Debug, Clone, Copy, Default)]
pub struct ExtractiveStub;

impl ChatBackend for ExtractiveStub {
    fn complete(&self, request: &ChatRequest) -> Result<String, TransportError> {
        let comments = prompt_comments(&request.prompt);
        if comments.is_empty() {
            return Err(TransportError::EmptyCompletion);
        }
        let seed = derive_seed(request.seed.unwrap_or(0), &[&request.model, &sha256_hex(request.prompt.as_bytes())]);
        let take = ((comments.len() as f64).sqrt().ceil() as usize).clamp(1, comments.len());
        let picked = PortableRng::from_seed(seed).sample(&comments, take);
        let body = picked
            .iter()
            .map(|c| {
                let c = c.trim_end_matches(['.', '!', '?']);
                format!("{c}.")
            })
            .collect::<Vec<_>>()
            .join(" ");
        Ok(format!("Participants expressed a range of views. {body}"))
    }
}
