use std::path::PathBuf;

use thiserror::Error;

pub type Result<T> = std::result::Result<T, MdaError>;

#[derive(Debug, Error)]
pub enum MdaError {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("shape mismatch in {op}: expected {expected}, got {got}")]
    ShapeMismatch { op: &'static str, expected: String, got: String },

    #[error("non-finite value at flat index {index}")]
    NonFinite { index: usize },

    #[error("uninitialized domain statistics for domain {domain}")]
    UninitializedDomainStats { domain: usize },

    #[error("label {label} out of range for {classes} classes")]
    LabelOutOfRange { label: usize, classes: usize },

    #[error("empty {0} batch")]
    EmptyBatch(&'static str),

    #[error("bad IDX magic number {found:#010x} (expected {expected:#010x})")]
    BadMagic { expected: u32, found: u32 },

    #[error("truncated IDX file: needed {needed} bytes, found {found}")]
    Truncated { needed: usize, found: usize },

    #[error("image count {images} does not match label count {labels}")]
    CountMismatch { images: usize, labels: usize },

    #[error("quota of {quota} exceeds dataset size {available} without replacement")]
    QuotaExceedsDataset { quota: usize, available: usize },

    #[error("non-finite loss at iteration {iteration}: {terms}")]
    NumericalAbort { iteration: usize, terms: String },

    #[error("config error at `{path}`: {message}")]
    Config { path: String, message: String },

    #[error("i/o error on {path:?}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),

    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),
}

impl MdaError {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        MdaError::Io { path: path.into(), source }
    }

    pub(crate) fn shape(op: &'static str, expected: impl ToString, got: impl ToString) -> Self {
        MdaError::ShapeMismatch {
            op,
            expected: expected.to_string(),
            got: got.to_string(),
        }
    }
}
