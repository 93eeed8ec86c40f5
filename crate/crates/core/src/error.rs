use std::io;

use thiserror::Error;

/// Errors produced by estimators, environments and the experiment harness.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("contract violation: {0}")]
    ContractViolation(String),

    #[error("dimension mismatch in {context}: expected {expected}, found {found}")]
    DimensionMismatch {
        context: &'static str,
        expected: usize,
        found: usize,
    },

    #[error("empty input: {0}")]
    EmptyInput(&'static str),

    #[error("matrix is not positive definite in {context} (last jitter {jitter:e})")]
    NotPositiveDefinite { context: &'static str, jitter: f64 },

    #[error("numerical inconsistency: {0}")]
    NumericalInconsistency(String),

    #[error("action has zero density under the policy")]
    ZeroDensity,

    #[error("episode exceeded the safety cap of {cap} steps")]
    StepCapExceeded { cap: usize },

    #[error("parameters diverged at update {update}: |theta|_inf = {norm:e}")]
    Diverged { update: usize, norm: f64 },

    #[error("angle is undefined for a zero vector")]
    UndefinedAngle,

    #[error("design matrix is rank deficient")]
    RankDeficient,

    #[error("dimension {dim} exceeds the dense limit {limit} for {context}")]
    TooLarge {
        context: &'static str,
        dim: usize,
        limit: usize,
    },

    #[error("config error in `{field}`: {message}")]
    Config { field: String, message: String },

    #[error(transparent)]
    Io(#[from] io::Error),
}

impl Error {
    pub(crate) fn config(field: impl Into<String>, message: impl Into<String>) -> Self {
        Error::Config {
            field: field.into(),
            message: message.into(),
        }
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
