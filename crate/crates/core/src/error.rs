use thiserror::Error;

/// Errors raised by the geometry, path, integrator and experiment layers.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("ambiguous projection of {point:?}: nearest candidates {first:?} and {second:?} are equidistant (driver step too large for the exterior-sphere radius)")]
    AmbiguousProjection {
        point: Vec<f64>,
        first: Vec<f64>,
        second: Vec<f64>,
    },

    #[error("condition {condition} needs metadata the {kind} domain does not carry: {reason}")]
    UnsupportedKind {
        kind: &'static str,
        condition: &'static str,
        reason: String,
    },

    #[error("starting point {0:?} lies outside the closed domain")]
    StartOutsideDomain(Vec<f64>),

    #[error("grid mismatch: {0}")]
    GridMismatch(String),

    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("tube of radius {delta} too narrow: no acceptance after {attempts} attempts (pilot acceptance estimate {pilot_acceptance:.3e})")]
    TubeTooNarrow {
        delta: f64,
        attempts: u64,
        pilot_acceptance: f64,
    },

    #[error("invalid parameter `{key}`: {message}")]
    InvalidParameter { key: String, message: String },

    #[error("non-finite value encountered: {0}")]
    NonFinite(String),
}

/// Coarse classification used for process exit codes and FFI status codes.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ErrorClass {
    /// Invalid configuration or inputs.
    Config,
    TubeTooNarrow,
    /// Failure inside a numerical routine.
    Numeric,
}

impl Error {
    pub fn class(&self) -> ErrorClass {
        match self {
            Error::InvalidParameter { .. }
            | Error::UnsupportedKind { .. }
            | Error::StartOutsideDomain(_)
            | Error::DimensionMismatch { .. } => ErrorClass::Config,
            Error::TubeTooNarrow { .. } => ErrorClass::TubeTooNarrow,
            Error::AmbiguousProjection { .. } | Error::GridMismatch(_) | Error::NonFinite(_) => ErrorClass::Numeric,
        }
    }

    pub(crate) fn invalid(key: impl Into<String>, message: impl Into<String>) -> Self {
        Error::InvalidParameter {
            key: key.into(),
            message: message.into(),
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
