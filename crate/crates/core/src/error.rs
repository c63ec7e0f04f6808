use std::path::PathBuf;

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid bit-width {bits} (minimum {min})")]
    InvalidBitWidth { bits: u32, min: u32 },

    #[error("invalid fixed-point format: {0}")]
    InvalidFormat(String),

    #[error("non-finite value {0}")]
    NonFinite(f64),

    #[error("element {index}: {source}")]
    Element {
        index: usize,
        #[source]
        source: Box<Error>,
    },

    #[error("dimension mismatch in {what}: expected {expected}, got {got}")]
    Dimension {
        what: String,
        expected: usize,
        got: usize,
    },

    #[error("batch-norm fold failed at feature {feature}: var + eps = {value} is not positive")]
    Fold { feature: usize, value: f64 },

    #[error("invalid folding config: {0}")]
    Folding(String),

    #[error("domain error: {0}")]
    Domain(String),

    #[error("invalid precision '{input}': {reason}")]
    Precision { input: String, reason: String },

    #[error("CER undefined for empty ground truth")]
    UndefinedRate,

    #[error("{path}: malformed {field}: {reason}")]
    Parse {
        path: PathBuf,
        field: &'static str,
        reason: String,
    },

    #[error("model: {0}")]
    Model(String),

    #[error("dataset: {0}")]
    Dataset(String),

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

impl Error {
    pub(crate) fn dimension(what: impl Into<String>, expected: usize, got: usize) -> Self {
        Error::Dimension {
            what: what.into(),
            expected,
            got,
        }
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}
