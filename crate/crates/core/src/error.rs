//! Error type shared across the crate.

/// Errors produced by construction and numerical routines.
#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum Error {
    /// A precondition on the inputs was violated.
    #[error("invalid input: {0}")]
    Validation(String),

    /// Two internally redundant computations disagreed.
    #[error("internal consistency check failed: {what} (residual {residual:.3e})")]
    Inconsistency { what: String, residual: f64 },

    /// An iterative numerical routine failed to converge.
    #[error("numerical failure: {what} (residual {residual:.3e})")]
    Numerical { what: String, residual: f64 },
}

impl Error {
    pub(crate) fn validation(msg: impl Into<String>) -> Self {
        Error::Validation(msg.into())
    }
}

pub type Result<T> = std::result::Result<T, Error>;
