//! Error type shared across the crate.

use thiserror::Error;

/// Convenience alias used by every fallible function in the crate.
pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    /// Input outside the function's domain: bad coefficients, malformed
    /// specs, preconditions violated by the caller.
    #[error("domain error: {0}")]
    Domain(String),

    /// A matrix truncation too small for the requested polynomial degree.
    #[error("truncation too small: degree {degree} needs more than {n} rows")]
    TruncationTooSmall { degree: usize, n: usize },

    /// Malformed JSON or a value that does not match the documented schema.
    #[error("parse error: {0}")]
    Parse(String),

    /// An internal consistency check failed; indicates a bug, not bad input.
    #[error("internal consistency failure: {0}")]
    Internal(String),

    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
}

impl Error {
    pub fn domain(msg: impl Into<String>) -> Self {
        Error::Domain(msg.into())
    }

    pub fn parse(msg: impl Into<String>) -> Self {
        Error::Parse(msg.into())
    }

    pub fn internal(msg: impl Into<String>) -> Self {
        Error::Internal(msg.into())
    }

    /// Process exit code for the CLI: 2 for caller mistakes, 3 for bugs.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Domain(_) | Error::TruncationTooSmall { .. } | Error::Parse(_) | Error::Io(_) => 2,
            Error::Internal(_) => 3,
        }
    }
}

impl From<serde_json::Error> for Error {
    fn from(e: serde_json::Error) -> Self {
        Error::Parse(e.to_string())
    }
}
