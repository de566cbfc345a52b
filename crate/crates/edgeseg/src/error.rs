//! Crate-wide error type.
//!
//! The four variants map one-to-one onto the CLI exit codes: usage errors
//! (2), I/O and file-format errors (3), and numeric/domain errors (4).

use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    /// Underlying I/O failure (missing file, truncated payload, write error).
    #[error("I/O error: {0}")]
    Io(#[from] std::io::Error),

    /// Malformed or unsupported file content.
    #[error("format error: {0}")]
    Format(String),

    /// Numerically degenerate input (empty mask, zero variance, empty set).
    #[error("domain error: {0}")]
    Domain(String),

    /// Caller violated an argument contract (dimension mismatch, bad flag).
    #[error("usage error: {0}")]
    Usage(String),
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    pub fn format(msg: impl Into<String>) -> Self {
        Error::Format(msg.into())
    }

    pub fn domain(msg: impl Into<String>) -> Self {
        Error::Domain(msg.into())
    }

    pub fn usage(msg: impl Into<String>) -> Self {
        Error::Usage(msg.into())
    }
}
