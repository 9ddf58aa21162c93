//! Error types shared by the whole pipeline.

use std::path::PathBuf;

/// Errors produced by the extraction, factorization, and classification stages.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    /// An argument violated a precondition (shape, range, finiteness).
    #[error("invalid input: {0}")]
    InvalidInput(String),

    /// A numeric operation could not be completed (singular system, NaN).
    #[error("numeric error: {0}")]
    Numeric(String),

    /// Training diverged or could not proceed.
    #[error("training error at epoch {epoch}: {message}")]
    Training { epoch: usize, message: String },

    /// Underlying I/O failure.
    #[error(transparent)]
    Io(#[from] std::io::Error),

    /// A container or model file is malformed.
    #[error("malformed file {path}: {message}")]
    Format { path: PathBuf, message: String },

    /// A CSV row could not be parsed.
    #[error("csv line {line}: {message}")]
    Csv { line: usize, message: String },
}

impl Error {
    pub fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidInput(msg.into())
    }

    pub fn numeric(msg: impl Into<String>) -> Self {
        Error::Numeric(msg.into())
    }

    pub fn format(path: impl Into<PathBuf>, msg: impl Into<String>) -> Self {
        Error::Format {
            path: path.into(),
            message: msg.into(),
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
