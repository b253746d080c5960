use std::path::PathBuf;

use thiserror::Error;

use crate::pools::PoolCategory;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("category {category} is not valid for {kind} subjects")]
    InvalidCategory { category: PoolCategory, kind: String },

    #[error("no usable entries for {0} pool")]
    EmptyPool(PoolCategory),

    #[error("missing {0} pool")]
    MissingPool(PoolCategory),

    #[error("invalid prompt: {0}")]
    InvalidPrompt(String),

    #[error("cannot parse prompt at byte {position}: {reason}")]
    Parse { position: usize, reason: String },

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("transport error: {0}")]
    Transport(String),

    #[error("protocol error: {0}")]
    Protocol(String),

    #[error("manifest mismatch: {0}")]
    ManifestMismatch(String),

    #[error("duplicate answer for question {question} by participant {participant}")]
    DuplicateAnswer { question: String, participant: String },

    #[error("{path}: {cause}")]
    Io { path: PathBuf, cause: std::io::Error },

    #[error("{context}: {source}")]
    Json {
        context: String,
        #[source]
        source: serde_json::Error,
    },
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            cause: source,
        }
    }

    pub(crate) fn json(context: impl Into<String>, source: serde_json::Error) -> Self {
        Error::Json {
            context: context.into(),
            source,
        }
    }

    /// Short machine-readable tag, used by the CLI's JSON error output.
    pub fn kind(&self) -> &'static str {
        match self {
            Error::InvalidCategory { .. } => "invalid_category",
            Error::EmptyPool(_) => "empty_pool",
            Error::MissingPool(_) => "missing_pool",
            Error::InvalidPrompt(_) => "invalid_prompt",
            Error::Parse { .. } => "parse",
            Error::InvalidArgument(_) => "invalid_argument",
            Error::Transport(_) => "transport",
            Error::Protocol(_) => "protocol",
            Error::ManifestMismatch(_) => "manifest_mismatch",
            Error::DuplicateAnswer { .. } => "duplicate_answer",
            Error::Io { .. } => "io",
            Error::Json { .. } => "json",
        }
    }
}
