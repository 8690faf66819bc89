//! Error type shared across the toolkit.

use std::path::PathBuf;

/// Anything that can go wrong while configuring, training or evaluating.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    /// A network or engine was built with inconsistent hyperparameters.
    #[error("invalid configuration: {0}")]
    Config(String),

    /// Tensor arguments had shapes the operation cannot accept.
    #[error("shape mismatch in {op}: {details}")]
    Shape { op: &'static str, details: String },

    /// A dataset directory was missing, empty or malformed.
    #[error("data error: {0}")]
    Data(String),

    /// Reading or decoding an image failed.
    #[error("image {path}: {reason}")]
    Image { path: PathBuf, reason: String },

    /// A checkpoint file was truncated, corrupt or version-incompatible.
    #[error("checkpoint error: {0}")]
    Checkpoint(String),

    /// Training produced a non-finite loss and cannot continue.
    #[error("non-finite loss at step {step}: {term}")]
    NonFinite { step: u64, term: &'static str },

    /// Filesystem trouble outside the more specific cases above.
    #[error("io error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

impl Error {
    /// Convenience for attaching a path to a raw io::Error.
    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io { path: path.into(), source }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
