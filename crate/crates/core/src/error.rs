use thiserror::Error;

/// Errors raised by the model, the samplers, and the evaluation routines.
#[derive(Debug, Error)]
pub enum Error {
    /// An argument is outside the domain of the operation.
    #[error("domain error: {0}")]
    Domain(String),
    /// Shapes of the inputs do not agree.
    #[error("shape mismatch: {0}")]
    Shape(String),
    /// A linear system or factorization failed.
    #[error("numerical failure: {0}")]
    Numerical(String),
    /// Forward simulation exceeded the configured firing-rate ceiling.
    #[error("unstable simulation: {0}")]
    Stability(String),
    /// The caller asked for something that cannot be computed from the inputs.
    #[error("usage error: {0}")]
    Usage(String),
}

pub type Result<T> = std::result::Result<T, Error>;

macro_rules! domain_err {
    ($($arg:tt)*) => { $crate::error::Error::Domain(format!($($arg)*)) };
}
macro_rules! shape_err {
    ($($arg:tt)*) => { $crate::error::Error::Shape(format!($($arg)*)) };
}
pub(crate) use domain_err;
pub(crate) use shape_err;
