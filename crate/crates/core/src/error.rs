use thiserror::Error;

/// Errors produced by the perturbation toolkit.
#[derive(Debug, Error)]
pub enum StrideError {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, StrideError>;

pub(crate) fn invalid<T>(msg: impl Into<String>) -> Result<T> {
    Err(StrideError::InvalidArgument(msg.into()))
}
