use thiserror::Error;

/// Errors raised by the alignment, transport and bound routines.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    /// Inputs outside the mathematical domain of the operation.
    #[error("domain error: {0}")]
    Domain(String),

    /// Brute-force enumeration would exceed its size guard.
    #[error("capacity exceeded: {what} needs {needed}, limit is {limit}")]
    Capacity {
        what: &'static str,
        needed: String,
        limit: u64,
    },

    /// Requested operation is not defined for these parameters.
    #[error("unsupported: {0}")]
    Unsupported(String),

    /// Mismatched dimensions between inputs.
    #[error("shape mismatch: {0}")]
    Shape(String),

    /// An iterative solver stopped at its iteration cap.
    #[error("no convergence after {iterations} iterations (residual {residual:e})")]
    Convergence { iterations: usize, residual: f64 },

    /// Two independent evaluation routes disagree beyond tolerance.
    #[error("internal consistency check failed: {0}")]
    Consistency(String),
}

impl Error {
    pub(crate) fn domain(msg: impl Into<String>) -> Self {
        Error::Domain(msg.into())
    }

    pub(crate) fn shape(msg: impl Into<String>) -> Self {
        Error::Shape(msg.into())
    }
}

/// Result alias used throughout the crate.
pub type Result<T> = std::result::Result<T, Error>;
