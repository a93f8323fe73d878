//! Error types shared across the crate.

use thiserror::Error;

/// Crate-wide result alias.
pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    /// Invalid shapes, layer geometry, or configuration values.
    #[error("configuration error: {0}")]
    Config(String),

    /// NaN/Inf encountered where finite values are required.
    #[error("numeric error: {0}")]
    Numeric(String),

    /// API misuse (e.g. backward on a non-scalar value).
    #[error("usage error: {0}")]
    Usage(String),

    /// Training aborted because the loss ran away.
    #[error("divergence: {0}")]
    Divergence(String),

    /// Evaluation is impossible (e.g. no valid pixels).
    #[error("evaluation error: {0}")]
    Eval(String),

    #[error("i/o error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },

    #[error("{0}")]
    Format(String),
}

impl Error {
    pub fn io(path: impl Into<String>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    /// Process exit code for the CLI: 2 validation, 3 numeric, 4 divergence.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Config(_) | Error::Usage(_) | Error::Format(_) | Error::Io { .. } => 2,
            Error::Numeric(_) | Error::Eval(_) => 3,
            Error::Divergence(_) => 4,
        }
    }
}
