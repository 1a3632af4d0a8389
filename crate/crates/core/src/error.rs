use thiserror::Error;

use crate::model::ValidationReport;

/// Errors produced anywhere in the crate.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid offspring law: {0}")]
    InvalidLaw(String),

    #[error("invalid model: {0}")]
    InvalidModel(String),

    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("argument out of range: {0}")]
    OutOfRange(String),

    #[error("second moment undefined for {0}")]
    MomentUndefined(String),

    #[error("{0}")]
    InsufficientRange(String),

    #[error("non-positive value {value} at point {index}")]
    NonPositive { index: usize, value: f64 },

    #[error("input lies on a regime boundary: {0}")]
    BoundaryRegime(String),

    #[error("condition violated: {0}")]
    ConditionViolated(String),

    #[error("unreliable conditioning: estimate {value:.3e} is within 5 standard errors ({se:.3e}) of zero")]
    UnreliableConditioning { value: f64, se: f64 },

    #[error("malformed config: {0}")]
    Config(String),

    #[error("unknown field `{0}`")]
    UnknownField(String),

    #[error("model validation failed:\n{0}")]
    Validation(ValidationReport),

    #[error("i/o error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
