use std::path::PathBuf;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("contract violation: {0}")]
    Contract(String),

    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("non-finite value in {context} (index {index})")]
    NonFinite { context: &'static str, index: usize },

    #[error("empty dataset")]
    EmptyDataset,

    #[error("insufficient data: need at least {needed} samples, got {got}")]
    InsufficientData { needed: usize, got: usize },

    #[error("degenerate covariance (condition estimate {condition:.3e})")]
    DegenerateCovariance { condition: f64 },

    #[error("undefined correlation: {0}")]
    UndefinedCorrelation(&'static str),

    #[error("line {line}: {message}")]
    Parse { line: usize, message: String },

    #[error("episode {episode}: {message}")]
    EpisodeWidth { episode: u64, message: String },

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    pub(crate) fn contract(msg: impl Into<String>) -> Self {
        Error::Contract(msg.into())
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}
