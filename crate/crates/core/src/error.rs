use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

/// Coarse failure class, used by front ends to pick an exit status.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ErrorKind {
    Config,
    Data,
    Numeric,
}

#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch: expected {expected}, got {actual} ({context})")]
    DimensionMismatch {
        expected: usize,
        actual: usize,
        context: &'static str,
    },
    #[error("class {class} has no samples")]
    EmptyClass { class: usize },
    #[error("label {label} is out of range for {classes} classes")]
    LabelOutOfRange { label: usize, classes: usize },
    #[error("need at least {needed} samples, got {actual}")]
    InsufficientSamples { needed: usize, actual: usize },
    #[error("matrix is not positive definite even with ridge {ridge:e}")]
    NotPositiveDefinite { ridge: f64 },
    #[error("quadratic form is negative ({value:e}); precision matrix is not PSD")]
    NegativeQuadraticForm { value: f64 },
    #[error("non-finite value in {what}")]
    NonFinite { what: String },
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),
    #[error("invalid data: {0}")]
    InvalidData(String),
    #[error("{path}:{line}: {message}")]
    Parse {
        path: PathBuf,
        line: usize,
        message: String,
    },
    #[error("bad magic in {0}")]
    BadMagic(String),
    #[error("unsupported format version {found} (expected {expected})")]
    UnsupportedVersion { found: String, expected: String },
    #[error("truncated input: {0}")]
    Truncated(String),
    #[error("text scoring unavailable")]
    TextUnavailable,
    #[error("io error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub fn kind(&self) -> ErrorKind {
        match self {
            Error::InvalidConfig(_) => ErrorKind::Config,
            Error::NotPositiveDefinite { .. }
            | Error::NegativeQuadraticForm { .. }
            | Error::NonFinite { .. } => ErrorKind::Numeric,
            _ => ErrorKind::Data,
        }
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn non_finite(what: impl Into<String>) -> Self {
        Error::NonFinite { what: what.into() }
    }
}
