use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    /// Shapes or extents that do not fit together.
    #[error("dimension error in {op}: {detail}")]
    Dimension { op: &'static str, detail: String },

    /// A forward op produced NaN or infinity, or an input was non-finite.
    #[error("non-finite value produced by {op}{}", detail.as_deref().map(|d| format!(": {d}")).unwrap_or_default())]
    Numeric { op: String, detail: Option<String> },

    /// API misuse, e.g. calling backward on a non-scalar.
    #[error("usage error: {0}")]
    Usage(String),

    #[error("configuration error: {0}")]
    Config(String),

    /// CSV ingestion failure at a 1-based data row and column.
    #[error("ingestion error in {path} at row {row}, column {column}: {detail}")]
    Ingestion {
        path: PathBuf,
        row: usize,
        column: String,
        detail: String,
    },

    #[error("checkpoint error ({field}): {detail}")]
    Checkpoint { field: String, detail: String },

    #[error("I/O error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn dim(op: &'static str, detail: impl Into<String>) -> Self {
        Error::Dimension {
            op,
            detail: detail.into(),
        }
    }

    pub(crate) fn numeric(op: impl Into<String>) -> Self {
        Error::Numeric {
            op: op.into(),
            detail: None,
        }
    }

    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    /// True for errors that stem from non-finite arithmetic.
    pub fn is_numeric(&self) -> bool {
        matches!(self, Error::Numeric { .. })
    }
}
