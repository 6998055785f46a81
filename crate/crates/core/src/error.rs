use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("dimension mismatch: {what} (expected {expected}, got {got})")]
    DimensionMismatch {
        what: &'static str,
        expected: usize,
        got: usize,
    },

    #[error("noise covariance is not positive definite; combiner set is ill-formed")]
    NotPositiveDefinite,

    #[error("zero signal power")]
    ZeroSignal,

    #[error("reference channel has zero norm")]
    ZeroNorm,

    #[error("non-finite message in {stage} at iteration {iteration}")]
    NonFinite {
        stage: &'static str,
        iteration: usize,
    },
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn invalid<T>(msg: impl Into<String>) -> Result<T> {
    Err(Error::InvalidArgument(msg.into()))
}
