use std::path::PathBuf;

use thiserror::Error;

/// Errors produced anywhere in the mining pipeline.
#[derive(Debug, Error)]
pub enum Error {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("line {line}: {message}")]
    Parse { line: usize, message: String },

    #[error("structural error: {0}")]
    Structure(String),

    #[error("domain error: {0}")]
    Domain(String),

    #[error("missing feature column `{0}`")]
    MissingFeature(String),

    #[error("histogram is empty")]
    EmptyHistogram,

    #[error("degenerate island: {0}")]
    Degenerate(String),

    #[error("covariance is not positive definite")]
    SingularCovariance,

    #[error("unsupported schema `{found}` (expected `{expected}`)")]
    Schema { found: String, expected: String },

    #[error("invalid input: {0}")]
    Invalid(String),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io { path: path.into(), source }
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
