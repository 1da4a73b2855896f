use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum NcmcError {
    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("cannot continue a path that already sits at the final date {0}")]
    CannotContinue(usize),

    #[error("degenerate calibration parameters: {0}")]
    DegenerateParams(String),

    #[error("tree too large to enumerate: {paths} paths exceed the limit of {limit}")]
    TreeTooLarge { paths: u64, limit: u64 },

    #[error("parse error at line {line}: {message}")]
    Parse { line: usize, message: String },
}

pub type Result<T> = std::result::Result<T, NcmcError>;

pub(crate) fn invalid(msg: impl Into<String>) -> NcmcError {
    NcmcError::InvalidInput(msg.into())
}
