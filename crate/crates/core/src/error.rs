use std::path::PathBuf;

use thiserror::Error;

/// Errors produced by the encoding and classification pipeline.
#[derive(Debug, Error)]
pub enum Error {
    /// A file does not start with the expected magic bytes or version.
    #[error("format error: {0}")]
    Format(String),

    /// A file header disagrees with its payload.
    #[error("corrupt data: {0}")]
    Corruption(String),

    /// An argument violates a documented precondition.
    #[error("invalid input: {0}")]
    Validation(String),

    /// The input is well formed but numerically degenerate (e.g. all zero).
    #[error("degenerate input: {0}")]
    DegenerateInput(String),

    #[error("I/O error on {}: {source}", path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("JSON error: {0}")]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}

macro_rules! ensure {
    ($cond:expr, $variant:ident, $($arg:tt)+) => {
        // Bound first so a NaN comparison counts as a failed check.
        let holds: bool = $cond;
        if !holds {
            return Err($crate::error::Error::$variant(format!($($arg)+)));
        }
    };
}
pub(crate) use ensure;
