use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch: {0}")]
    Dimension(String),

    #[error("validation failed: {0}")]
    Validation(String),

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("container format error in {path:?}: {reason}")]
    Format {
        path: Option<PathBuf>,
        reason: String,
    },

    #[error("non-finite loss at step {step} (phase {phase}); snapshot written to {snapshot:?}")]
    NonFinite {
        step: u64,
        phase: u8,
        snapshot: Option<PathBuf>,
    },

    #[error("undefined metric: {0}")]
    UndefinedMetric(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn dim(msg: impl Into<String>) -> Self {
        Error::Dimension(msg.into())
    }

    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        Error::Validation(msg.into())
    }

    pub(crate) fn format(path: Option<PathBuf>, reason: impl Into<String>) -> Self {
        Error::Format {
            path,
            reason: reason.into(),
        }
    }
}
