//! Crate-wide error type.

use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    /// Invalid configuration supplied by the caller.
    #[error("invalid config: {0}")]
    Config(String),

    /// Tensor or vector shapes do not line up.
    #[error("shape mismatch: {0}")]
    Shape(String),

    /// A sample with no usable information (e.g. zero energy).
    #[error("degenerate sample: {0}")]
    Degenerate(String),

    /// A serialized artifact failed to parse; names the offending field.
    #[error("parse error in `{field}`: {reason}")]
    Parse { field: &'static str, reason: String },

    /// A feedback frame failed validation.
    #[error("corrupt frame: {0}")]
    Corrupt(String),

    /// Training produced a non-finite loss.
    #[error("training diverged at epoch {epoch}: {reason}")]
    Diverged { epoch: usize, reason: String },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error("json: {0}")]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub fn parse(field: &'static str, reason: impl Into<String>) -> Self {
        Error::Parse {
            field,
            reason: reason.into(),
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
