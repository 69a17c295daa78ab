use std::path::PathBuf;
use thiserror::Error;

/// Result alias used throughout the crate.
pub type Result<T> = std::result::Result<T, Error>;

/// Errors shared by every module in the crate.
#[derive(Debug, Error)]
pub enum Error {
    #[error("shape mismatch in {op}: {detail}")]
    ShapeMismatch { op: &'static str, detail: String },

    #[error("empty input: {0}")]
    EmptyInput(&'static str),

    #[error("degenerate vector: {0}")]
    DegenerateVector(String),

    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error("missing file: {0}")]
    MissingFile(PathBuf),

    #[error("{path}:{line}: {detail}")]
    Parse {
        path: PathBuf,
        line: usize,
        detail: String,
    },

    #[error("dataset violation: {0}")]
    DataViolation(String),

    #[error("validation split required: {0}")]
    MissingValidation(&'static str),

    #[error("training diverged: {0}")]
    Diverged(String),

    #[error("bad checkpoint: {0}")]
    BadCheckpoint(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl Error {
    pub fn shape(op: &'static str, detail: impl Into<String>) -> Error {
        Error::ShapeMismatch {
            op,
            detail: detail.into(),
        }
    }

    /// Process exit code for the CLI. Documented in `relzsl --help`.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::MissingFile(_) | Error::Io(_) => 3,
            Error::Parse { .. } | Error::DataViolation(_) | Error::BadCheckpoint(_) => 4,
            Error::InvalidConfig(_) | Error::MissingValidation(_) => 5,
            Error::ShapeMismatch { .. }
            | Error::EmptyInput(_)
            | Error::DegenerateVector(_)
            | Error::Diverged(_) => 6,
        }
    }
}
