use thiserror::Error;

/// Errors raised by the laboratory.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
    #[error("non-finite input in {0}")]
    NonFinite(&'static str),
    #[error("domain error: {0}")]
    Domain(String),
    #[error("iteration did not converge: {0}")]
    NoConvergence(String),
    #[error("infeasible: {0}")]
    Infeasible(String),
    #[error("positivity lost at step {step} (min {min})")]
    PositivityLost { step: usize, min: f64 },
    #[error("grid resolution too coarse: {reason} (required nx >= {required_nx})")]
    Resolution { reason: String, required_nx: usize },
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn invalid<T>(msg: impl Into<String>) -> Result<T> {
    Err(Error::InvalidArgument(msg.into()))
}
