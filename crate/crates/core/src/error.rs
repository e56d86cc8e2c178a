use thiserror::Error;

/// Errors produced by the solver library.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("dimension mismatch: expected {expected} qubits, got {actual}")]
    DimensionMismatch { expected: usize, actual: usize },

    /// The operator expectation in the cost denominator was not positive.
    #[error("operator expectation {denominator} is not positive (missing regularization?)")]
    SingularOperator { denominator: f64 },

    /// A shot-sampled denominator came out non-positive; more shots are needed.
    #[error("sampled denominator {denominator} is not positive; increase shots")]
    UnstableEstimate { denominator: f64 },

    #[error("unsupported: {0}")]
    Unsupported(String),

    #[error("classical solver failed: {0}")]
    Solver(String),

    #[error("non-finite value encountered: {0}")]
    NonFinite(String),
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn invalid<T>(msg: impl Into<String>) -> Result<T> {
    Err(Error::InvalidArgument(msg.into()))
}
