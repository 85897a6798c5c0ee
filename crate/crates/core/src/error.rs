use std::io;
use std::path::PathBuf;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("domain error: {0}")]
    Domain(String),

    #[error("invalid parameters: {0}")]
    InvalidParams(String),

    #[error("shape mismatch in {context}: expected {expected}, found {found}")]
    Shape {
        context: &'static str,
        expected: usize,
        found: usize,
    },

    #[error("grid specification generates no samples")]
    EmptyDataset,

    #[error("degenerate split: {0}")]
    DegenerateSplit(String),

    #[error("{}: line {line}: {message}", path.display())]
    Csv { path: PathBuf, line: u64, message: String },

    #[error("unsupported schema version {found} (expected {expected})")]
    Schema { expected: u32, found: u32 },

    #[error("metadata mismatch: {0}")]
    Metadata(String),

    #[error("numeric failure: {0}")]
    Numeric(String),

    #[error("invalid target: {0}")]
    Target(String),

    #[error(transparent)]
    Io(#[from] io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;

impl Error {
    pub(crate) fn shape(context: &'static str, expected: usize, found: usize) -> Self {
        Error::Shape {
            context,
            expected,
            found,
        }
    }
}
