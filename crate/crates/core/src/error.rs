use thiserror::Error;

use crate::optimize::RunTrace;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch: expected {expected}, got {actual}")]
    DimensionMismatch { expected: usize, actual: usize },

    #[error("invalid parameter `{name}`: {reason}")]
    InvalidParameter { name: &'static str, reason: String },

    #[error("coordinate index {index} out of range for dimension {dimension}")]
    IndexOutOfRange { index: usize, dimension: usize },

    #[error("coordinate {index} was selected with probability 0")]
    ZeroProbability { index: usize },

    #[error("objective metadata `{0}` is required but unknown")]
    MissingMetadata(&'static str),

    #[error("iterate diverged at iteration {iteration} (norm {norm:e})")]
    Diverged {
        iteration: usize,
        norm: f64,
        partial: Box<RunTrace>,
    },

    #[error("objective evaluation failed at iteration {iteration}: {source}")]
    Aborted {
        iteration: usize,
        source: Box<Error>,
        partial: Box<RunTrace>,
    },

    #[error("malformed data: {0}")]
    Data(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl Error {
    pub(crate) fn invalid(name: &'static str, reason: impl Into<String>) -> Self {
        Error::InvalidParameter {
            name,
            reason: reason.into(),
        }
    }
}

pub(crate) fn check_dimension(expected: usize, actual: usize) -> Result<()> {
    if expected != actual {
        return Err(Error::DimensionMismatch { expected, actual });
    }
    Ok(())
}
