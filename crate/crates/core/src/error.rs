use thiserror::Error;

pub type Result<T> = std::result::Result<T, QmleError>;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum QmleError {
    /// Malformed input: wrong dimensions, out-of-range indices, NaN data, bad orders.
    #[error("invalid input: {0}")]
    Input(String),

    /// A parameter vector violates the parameter box or the family's positivity constraints.
    #[error("constraint violated: {0}")]
    Constraint(String),

    /// The parameters do not define a stationary (or invertible) process.
    #[error("stationarity: {0}")]
    Stationarity(String),

    /// Overflow, NaN or a broken numerical invariant during a computation.
    #[error("numeric failure: {0}")]
    Numeric(String),

    /// A matrix that must be inverted is (numerically) singular.
    #[error("singular matrix: {0}")]
    Singular(String),
}

impl QmleError {
    pub fn input(msg: impl Into<String>) -> Self {
        QmleError::Input(msg.into())
    }

    pub fn numeric(msg: impl Into<String>) -> Self {
        QmleError::Numeric(msg.into())
    }
}
