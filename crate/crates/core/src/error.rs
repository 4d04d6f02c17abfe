use std::path::PathBuf;

use thiserror::Error;

/// Errors raised by mechanisms, games and the experiment front end.
#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimensionMismatch { expected: usize, found: usize },

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("horizon of {horizon} timesteps exhausted")]
    HorizonExhausted { horizon: usize },

    #[error("unsupported privacy budget: {0}")]
    UnsupportedBudget(String),

    #[error("protocol violation at t={t}: {message}")]
    Protocol { t: usize, message: String },

    #[error("parse error on line {line}: {message}")]
    Parse { line: usize, message: String },

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn invalid(msg: impl Into<String>) -> Error {
    Error::InvalidArgument(msg.into())
}
