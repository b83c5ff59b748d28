use thiserror::Error;

/// Errors raised by the numerical routines.
///
/// Numerical *outcomes* (blow-up, divergence of a schedule, failed property
/// checks) are reported in the returned values, not here.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("invalid parameter `{name}`: {reason}")]
    InvalidParameter { name: &'static str, reason: String },

    #[error("non-finite value at index {index}")]
    NonFinite { index: usize },

    #[error("spectrum is not conjugate-symmetric (defect {defect:.3e})")]
    NotConjugateSymmetric { defect: f64 },

    #[error("grid mismatch: {0}")]
    GridMismatch(String),

    #[error("kernel mass defect {defect:.3e} exceeds tolerance {tolerance:.1e}; try half-length R >= {suggested_half_length:.1}")]
    MassDefect {
        defect: f64,
        tolerance: f64,
        suggested_half_length: f64,
    },

    #[error("bound constant did not stabilize under refinement: {coarse:.6} vs {refined:.6}")]
    UnstableConstant { coarse: f64, refined: f64 },

    #[error("insufficient data: {0}")]
    Insufficient(String),

    #[error("i/o error: {0}")]
    Io(String),
}

impl From<std::io::Error> for Error {
    fn from(e: std::io::Error) -> Self {
        Error::Io(e.to_string())
    }
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn invalid(name: &'static str, reason: impl Into<String>) -> Error {
    Error::InvalidParameter {
        name,
        reason: reason.into(),
    }
}
