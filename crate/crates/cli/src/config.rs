use crate::error::CliError;
use delibench::aggregate::IncompletePolicy;
use delibench::io::sha256_hex;
use delibench::ringmatch::{PairingMode, PairingSpec, DEFAULT_K};
use delibench::sampler::{DEFAULT_RESAMPLES, DEFAULT_SIZES};
use delibench::scores::SupervisionWeights;
use delibench::summarizer::SummarizerConfig;
use serde::{Deserialize, Serialize};
use std::path::{Path, PathBuf};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub seed: u64,
    #[serde(default = "default_out")]
    pub out_dir: PathBuf,
    pub corpus: CorpusPaths,
    #[serde(default)]
    pub sampling: SamplingConfig,
    pub summarizers: Vec<SummarizerConfig>,
    #[serde(default)]
    pub pairing: PairingConfig,
    pub judge: JudgeConfig,
    #[serde(default)]
    pub concurrency: ConcurrencyConfig,
    #[serde(default)]
    pub report: ReportConfig,
    #[serde(default)]
    pub training: SupervisionWeights,
}

fn default_out() -> PathBuf {
    PathBuf::from("out")
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CorpusPaths {
    pub questions: PathBuf,
    pub opinions: PathBuf,
    /// Human-annotated summaries referenced by `annotations`.
    #[serde(default)]
    pub summaries: Option<PathBuf>,
    #[serde(default)]
    pub annotations: Option<PathBuf>,
    /// Drop opinions and annotations completed faster than this. No default.
    #[serde(default)]
    pub qc_min_seconds: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SamplingConfig {
    pub sizes: Vec<usize>,
    pub resamples: u32,
}

impl Default for SamplingConfig {
    fn default() -> Self {
        Self {
            sizes: DEFAULT_SIZES.to_vec(),
            resamples: DEFAULT_RESAMPLES,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PairingConfig {
    pub mode: PairingMode,
    #[serde(default)]
    pub k: Option<usize>,
    #[serde(default, rename = "M", alias = "m")]
    pub m: Option<usize>,
}

impl Default for PairingConfig {
    fn default() -> Self {
        Self {
            mode: PairingMode::PerSummaryK,
            k: Some(DEFAULT_K),
            m: None,
        }
    }
}

impl PairingConfig {
    pub fn spec(&self, seed: u64) -> PairingSpec {
        PairingSpec {
            mode: self.mode,
            k: self.k,
            m: self.m,
            seed,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct JudgeConfig {
    /// `stub`, `remote`, or `llm:<model>`.
    pub kind: String,
    #[serde(default)]
    pub endpoint: Option<String>,
    #[serde(default)]
    pub api_key_env: Option<String>,
    #[serde(default = "default_judge_timeout")]
    pub timeout_secs: u64,
    #[serde(default = "default_judge_retries")]
    pub max_retries: u32,
}

fn default_judge_timeout() -> u64 {
    60
}

fn default_judge_retries() -> u32 {
    2
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum JudgeKind<'a> {
    Stub,
    Remote,
    Llm(&'a str),
}

impl JudgeConfig {
    pub fn parse_kind(&self) -> Result<JudgeKind<'_>, CliError> {
        match self.kind.as_str() {
            "stub" => Ok(JudgeKind::Stub),
            "remote" => Ok(JudgeKind::Remote),
            k => match k.strip_prefix("llm:") {
                Some(model) if !model.is_empty() => Ok(JudgeKind::Llm(model)),
                _ => Err(CliError::Validation(format!(
                    "judge kind `{k}`: expected stub, remote or llm:<model>"
                ))),
            },
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ConcurrencyConfig {
    pub max_in_flight: usize,
    /// Cap on provider requests per run, retries included.
    #[serde(default)]
    pub max_requests: Option<u64>,
}

impl Default for ConcurrencyConfig {
    fn default() -> Self {
        Self {
            max_in_flight: 4,
            max_requests: None,
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ReportConfig {
    #[serde(default)]
    pub incomplete: IncompletePolicy,
    #[serde(default)]
    pub heatmap: bool,
}

/// Command-line values that take precedence over the file.
#[derive(Debug, Clone, Default, PartialEq, Serialize)]
pub struct Overrides {
    pub seed: Option<u64>,
    pub judge: Option<String>,
    pub out: Option<PathBuf>,
    pub max_requests: Option<u64>,
    pub heatmap: bool,
}

/// A loaded config with paths resolved against the config file's directory.
#[derive(Debug, Clone)]
pub struct LoadedConfig {
    pub config: RunConfig,
    /// Hash of the uninterpolated file text plus overrides; secrets never enter it.
    pub config_sha256: String,
    pub source: PathBuf,
}

/// Replaces `${NAME}` with the value of environment variable `NAME`.
pub fn interpolate(text: &str, lookup: impl Fn(&str) -> Option<String>) -> Result<String, CliError> {
    let mut out = String::with_capacity(text.len());
    let mut rest = text;
    while let Some(start) = rest.find("${") {
        out.push_str(&rest[..start]);
        let after = &rest[start + 2..];
        let end = after
            .find('}')
            .ok_or_else(|| CliError::Validation("unterminated `${` in config".into()))?;
        let name = &after[..end];
        if name.is_empty() || !name.chars().all(|c| c.is_ascii_alphanumeric() || c == '_') {
            return Err(CliError::Validation(format!("bad variable name `{name}` in config")));
        }
        let value = lookup(name)
            .ok_or_else(|| CliError::Validation(format!("environment variable `{name}` is not set")))?;
        out.push_str(&value);
        rest = &after[end + 1..];
    }
    out.push_str(rest);
    Ok(out)
}

pub fn parse_config(text: &str) -> Result<RunConfig, CliError> {
    toml::from_str(text).map_err(|e| CliError::Validation(format!("config: {e}")))
}

impl LoadedConfig {
    pub fn load(path: &Path, overrides: &Overrides) -> Result<Self, CliError> {
        let raw = std::fs::read_to_string(path)
            .map_err(|e| CliError::Validation(format!("cannot read config {}: {e}", path.display())))?;
        let text = interpolate(&raw, |k| std::env::var(k).ok())?;
        let mut config = parse_config(&text)?;
        let base = path.parent().unwrap_or(Path::new("."));
        config.apply(overrides);
        config.resolve_paths(base);
        let hashed = format!(
            "{raw}\n{}",
            serde_json::to_string(overrides).expect("overrides serialize")
        );
        let loaded = Self {
            config,
            config_sha256: sha256_hex(hashed.as_bytes()),
            source: path.to_path_buf(),
        };
        loaded.config.validate()?;
        Ok(loaded)
    }
}

fn resolve(base: &Path, p: &mut PathBuf) {
    if p.is_relative() {
        *p = base.join(&*p);
    }
}

impl RunConfig {
    pub fn apply(&mut self, o: &Overrides) {
        if let Some(seed) = o.seed {
            self.seed = seed;
        }
        if let Some(judge) = &o.judge {
            self.judge.kind = judge.clone();
        }
        if let Some(out) = &o.out {
            self.out_dir = out.clone();
        }
        if o.max_requests.is_some() {
            self.concurrency.max_requests = o.max_requests;
        }
        if o.heatmap {
            self.report.heatmap = true;
        }
    }

    fn resolve_paths(&mut self, base: &Path) {
        resolve(base, &mut self.out_dir);
        resolve(base, &mut self.corpus.questions);
        resolve(base, &mut self.corpus.opinions);
        for p in [&mut self.corpus.summaries, &mut self.corpus.annotations].into_iter().flatten() {
            resolve(base, p);
        }
        for s in &mut self.summarizers {
            if s.cache_dir.as_os_str().is_empty() {
                s.cache_dir = self.out_dir.join("cache").join(slug(&s.model_id));
            } else {
                resolve(base, &mut s.cache_dir);
            }
        }
    }

    pub fn validate(&self) -> Result<(), CliError> {
        let bad = |m: String| Err(CliError::Validation(m));
        let mut paths = vec![&self.corpus.questions, &self.corpus.opinions];
        paths.extend(self.corpus.summaries.iter());
        paths.extend(self.corpus.annotations.iter());
        for p in paths {
            if !p.is_file() {
                return bad(format!("corpus file {} does not exist", p.display()));
            }
        }
        if self.corpus.annotations.is_some() && self.corpus.summaries.is_none() {
            return bad("corpus.annotations needs corpus.summaries".into());
        }
        if let Some(t) = self.corpus.qc_min_seconds {
            if !t.is_finite() || t < 0.0 {
                return bad(format!("qc_min_seconds must be a non-negative number, got {t}"));
            }
        }
        if self.summarizers.is_empty() {
            return bad("at least one [[summarizers]] entry is required".into());
        }
        let mut ids: Vec<&str> = self.summarizers.iter().map(|s| s.model_id.as_str()).collect();
        ids.sort_unstable();
        if let Some(w) = ids.windows(2).find(|w| w[0] == w[1]) {
            return bad(format!("duplicate summarizer model_id `{}`", w[0]));
        }
        if ids.iter().any(|id| id.is_empty() || id.contains(':')) {
            return bad("summarizer model_id must be non-empty and free of `:`".into());
        }
        if self.sampling.sizes.is_empty() || self.sampling.resamples == 0 {
            return bad("sampling needs at least one size and one resample".into());
        }
        if self.concurrency.max_in_flight == 0 {
            return bad("concurrency.max_in_flight must be positive".into());
        }
        match self.judge.parse_kind()? {
            JudgeKind::Remote | JudgeKind::Llm(_) if self.judge.endpoint.is_none() => {
                bad(format!("judge `{}` needs an endpoint", self.judge.kind))
            }
            _ => Ok(()),
        }
    }
}

/// File-name-safe form of an identifier.
pub fn slug(id: &str) -> String {
    id.chars()
        .map(|c| if c.is_ascii_alphanumeric() || c == '-' || c == '_' || c == '.' { c } else { '_' })
        .collect()
}
