use delibench::chat::TransportError;
use delibench::scores::JudgeError;
use delibench::summarizer::SummarizerError;

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("{0}")]
    Validation(String),
    #[error("transport failure: {0}")]
    Transport(String),
    #[error("stale manifest: {0}")]
    Stale(String),
    #[error("missing upstream artifact: {missing} (run `{stage}` first)")]
    MissingUpstream { stage: &'static str, missing: String },
    #[error("{0}")]
    Io(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Validation(_) | CliError::MissingUpstream { .. } => 2,
            CliError::Transport(_) => 3,
            CliError::Stale(_) => 4,
            CliError::Io(_) => 1,
        }
    }

    pub fn io(context: impl std::fmt::Display, e: impl std::fmt::Display) -> Self {
        CliError::Io(format!("{context}: {e}"))
    }
}

impl From<TransportError> for CliError {
    fn from(e: TransportError) -> Self {
        match e {
            TransportError::MissingCredentials(_) => CliError::Validation(e.to_string()),
            e => CliError::Transport(e.to_string()),
        }
    }
}

impl From<SummarizerError> for CliError {
    fn from(e: SummarizerError) -> Self {
        match e {
            SummarizerError::Transport { ref source, .. } => match source {
                TransportError::MissingCredentials(_) => CliError::Validation(e.to_string()),
                _ => CliError::Transport(e.to_string()),
            },
            SummarizerError::Cache { .. } => CliError::Io(e.to_string()),
            e => CliError::Validation(e.to_string()),
        }
    }
}

impl From<JudgeError> for CliError {
    fn from(e: JudgeError) -> Self {
        match e {
            JudgeError::Transport(t) => t.into(),
            JudgeError::InvalidRequest(_) => CliError::Validation(e.to_string()),
            e => CliError::Transport(e.to_string()),
        }
    }
}
