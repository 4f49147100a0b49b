use std::path::PathBuf;

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("cannot access {path}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("line {line}: {message}")]
    Parse { line: usize, message: String },

    #[error("database contains no transactions")]
    EmptyDatabase,

    #[error("no candidate items survive pruning at threshold {threshold}")]
    NoCandidates { threshold: u64 },

    #[error("invalid itemset: {0}")]
    InvalidItemset(String),

    #[error("operation requires a utility database")]
    NotUtilityDatabase,

    #[error("random initialisation found no existing itemset in {attempts} attempts; review the threshold")]
    InitExhausted { attempts: usize },

    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),

    #[error("non-finite loss at batch row {row}")]
    NonFiniteLoss { row: usize },

    #[error("more than {cap} candidates explored; raise the threshold")]
    CandidateCap { cap: usize },

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("extracted pattern {pattern} fails its threshold on re-scoring")]
    Verification { pattern: String },

    #[error("{context}: {source}")]
    Context {
        context: String,
        #[source]
        source: Box<Error>,
    },

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub fn context(self, context: impl Into<String>) -> Self {
        Error::Context {
            context: context.into(),
            source: Box::new(self),
        }
    }
}
