use std::path::PathBuf;

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),

    #[error("matrix `{name}` is not square ({rows}x{cols})")]
    NotSquare {
        name: String,
        rows: usize,
        cols: usize,
    },

    #[error("matrix `{name}` has a non-finite entry at ({row}, {col})")]
    NonFinite { name: String, row: usize, col: usize },

    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("numeric failure: {0}")]
    Numeric(String),

    #[error("file not found: {}", .0.display())]
    MissingFile(PathBuf),

    #[error("malformed {what} in {}: {reason}", path.display())]
    Malformed {
        what: &'static str,
        path: PathBuf,
        reason: String,
    },

    #[error("i/o error on {}: {source}", path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn malformed(what: &'static str, path: impl Into<PathBuf>, reason: impl ToString) -> Self {
        Error::Malformed {
            what,
            path: path.into(),
            reason: reason.to_string(),
        }
    }
}
