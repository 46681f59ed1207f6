use thiserror::Error;

/// Errors produced by the library.
#[derive(Debug, Error)]
pub enum Error {
    /// Invalid configuration or hyperparameters.
    #[error("configuration error: {0}")]
    Config(String),

    /// A precondition on the inputs of an operation was violated.
    #[error("contract violation: {0}")]
    Contract(String),

    /// A chain produced a non-finite value.
    #[error("chain diverged at step {step}: {reason}")]
    Divergence { step: u64, reason: String },

    /// Malformed or truncated file.
    #[error("format error at byte offset {offset}: {message}")]
    Format { offset: u64, message: String },

    /// A file written by an incompatible format version.
    #[error("unsupported {what} format version {found} (this build reads version {supported}); re-export the artifact with a matching build")]
    Version {
        what: &'static str,
        found: u32,
        supported: u32,
    },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;

impl Error {
    pub(crate) fn config(msg: impl Into<String>) -> Self {
        Error::Config(msg.into())
    }

    pub(crate) fn contract(msg: impl Into<String>) -> Self {
        Error::Contract(msg.into())
    }

    pub(crate) fn format(offset: u64, msg: impl Into<String>) -> Self {
        Error::Format {
            offset,
            message: msg.into(),
        }
    }
}
