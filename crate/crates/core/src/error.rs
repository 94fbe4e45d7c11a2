use thiserror::Error;

/// Errors produced anywhere in the compression pipeline.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("shape mismatch at layer {layer}: expected {expected}, got {actual}")]
    ShapeMismatch {
        layer: usize,
        expected: String,
        actual: String,
    },

    #[error("bad magic: expected {expected}, found {found}")]
    BadMagic { expected: String, found: String },

    #[error("manifest parse error on line {line}: {message}")]
    ManifestParse { line: usize, message: String },

    #[error("payload truncated: need {needed} bytes, have {available}")]
    PayloadTruncated { needed: usize, available: usize },

    #[error("count mismatch for {what}: declared {declared}, expected {expected}")]
    CountMismatch {
        what: String,
        declared: usize,
        expected: usize,
    },

    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),

    #[error("dataset is empty")]
    EmptyDataset,

    #[error("non-finite loss at epoch {epoch}, step {step}: {loss}")]
    NonFiniteLoss { epoch: usize, step: usize, loss: f32 },

    #[error("delta stream overruns dense length {dense_len} (position {position})")]
    DeltaOverrun { position: usize, dense_len: usize },

    #[error("delta stream is not strictly increasing at entry {entry}")]
    NonIncreasingIndex { entry: usize },

    #[error("identifier collision in generated code: {0}")]
    IdentifierCollision(String),

    #[error("buffer plan too small: {what} needs {needed}, plan has {planned}")]
    BufferPlanTooSmall {
        what: String,
        needed: usize,
        planned: usize,
    },

    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error("io error: {0}")]
    Io(String),
}

impl From<std::io::Error> for Error {
    fn from(e: std::io::Error) -> Self {
        Error::Io(e.to_string())
    }
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn shape_mismatch(layer: usize, expected: impl std::fmt::Debug, actual: impl std::fmt::Debug) -> Error {
    Error::ShapeMismatch {
        layer,
        expected: format!("{expected:?}"),
        actual: format!("{actual:?}"),
    }
}
