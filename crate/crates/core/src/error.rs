use std::path::PathBuf;

use thiserror::Error;

pub type Result<T> = std::result::Result<T, SalError>;

#[derive(Debug, Error)]
pub enum SalError {
    #[error("dimension mismatch: expected {expected}, got {actual}")]
    DimensionMismatch { expected: usize, actual: usize },

    #[error("empty input: {0}")]
    EmptyInput(&'static str),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("insufficient {pool} pool: need {needed}, have {available}")]
    InsufficientPool {
        pool: &'static str,
        needed: usize,
        available: usize,
    },

    #[error("class {0} has no samples")]
    EmptyClass(usize),

    #[error("non-finite loss at epoch {epoch}, step {step}; learning rate may be too high")]
    NonFiniteLoss { epoch: usize, step: usize },

    #[error("candidate outlier set is empty; lower the threshold or check the filter")]
    NoCandidates,

    #[error("{path}:{line}: {msg}")]
    Parse {
        path: PathBuf,
        line: usize,
        msg: String,
    },

    #[error("invalid config field `{field}`: {msg}")]
    Config { field: String, msg: String },

    #[error("missing upstream artifact: {0}")]
    MissingArtifact(PathBuf),

    #[error("io error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

impl SalError {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        SalError::Io {
            path: path.into(),
            source,
        }
    }
}
