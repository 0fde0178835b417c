use thiserror::Error;

/// Errors raised across the crate.
///
/// `Validation` covers malformed inputs and broken preconditions; `Divergence`
/// signals non-finite quantities during learning and maps to a distinct exit
/// code in the CLI.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("validation error: {0}")]
    Validation(String),
    #[error("training diverged: {0}")]
    Divergence(String),
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn invalid<T>(msg: impl Into<String>) -> Result<T> {
    Err(Error::Validation(msg.into()))
}

macro_rules! ensure {
    ($cond:expr, $($fmt:tt)+) => {
        if !$cond {
            return Err($crate::Error::Validation(format!($($fmt)+)));
        }
    };
}
pub(crate) use ensure;
