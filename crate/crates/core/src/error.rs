use std::io;
use std::path::PathBuf;

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: io::Error,
    },

    #[error("malformed tensor file: {0}")]
    Format(String),

    #[error("unsupported dtype {found:?} (expected {expected})")]
    Dtype {
        found: String,
        expected: &'static str,
    },

    #[error("non-finite value at flat index {index}")]
    NonFinite { index: usize },

    #[error("shape mismatch: {0}")]
    Shape(String),

    #[error("invalid value: {0}")]
    Validation(String),

    #[error("configuration error: {0}")]
    Config(String),

    #[error("zero-norm vector at row {row} is undefined under cosine distance")]
    ZeroNorm { row: usize },

    #[error("numeric error: {0}")]
    Numeric(String),

    #[error("metric undefined: {0}")]
    UndefinedMetric(String),

    #[error("degenerate normalization fit: {0}")]
    DegenerateFit(String),

    #[error("no samples found under {0}")]
    NoSamples(PathBuf),

    #[error("{0}")]
    Json(#[from] serde_json::Error),

    #[error("{0}")]
    Csv(#[from] csv::Error),

    #[error("png encoding failed: {0}")]
    Png(#[from] png::EncodingError),

    #[error("{count} sample(s) failed: {summary}")]
    Batch { count: usize, summary: String },
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    /// Process exit code for the command-line tool: 1 for validation and
    /// configuration problems, 2 for runtime and data problems.
    pub fn exit_code(&self) -> u8 {
        match self {
            Error::Config(_)
            | Error::Validation(_)
            | Error::Shape(_)
            | Error::DegenerateFit(_)
            | Error::ZeroNorm { .. }
            | Error::NonFinite { .. } => 1,
            _ => 2,
        }
    }
}
