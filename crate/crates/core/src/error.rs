use std::io;

use thiserror::Error;

/// Errors produced anywhere in the library.
#[derive(Debug, Error)]
pub enum CanmError {
    #[error("shape error: {0}")]
    Shape(String),

    #[error("usage error: {0}")]
    Usage(String),

    #[error("configuration error: {0}")]
    Config(String),

    #[error("non-finite value produced by `{op}`")]
    NonFinite { op: &'static str },

    #[error("division by exact zero in `div`")]
    DivByZero,

    #[error("training diverged at step {step}")]
    Divergence { step: usize },

    #[error("tensor format error: {0}")]
    Format(String),

    #[error("checkpoint error for parameter `{name}`: {reason}")]
    Checkpoint { name: String, reason: String },

    #[error("image error: {0}")]
    Image(String),

    #[error("{context}: {source}")]
    Io {
        context: String,
        #[source]
        source: io::Error,
    },

    #[error("gradcheck failed evaluating input {input} coordinate {coord}: {source}")]
    Gradcheck {
        input: usize,
        coord: usize,
        #[source]
        source: Box<CanmError>,
    },

    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, CanmError>;

impl CanmError {
    pub fn shape(msg: impl Into<String>) -> Self {
        CanmError::Shape(msg.into())
    }

    pub fn usage(msg: impl Into<String>) -> Self {
        CanmError::Usage(msg.into())
    }

    pub fn config(msg: impl Into<String>) -> Self {
        CanmError::Config(msg.into())
    }

    pub fn io(context: impl Into<String>, source: io::Error) -> Self {
        CanmError::Io {
            context: context.into(),
            source,
        }
    }
}
