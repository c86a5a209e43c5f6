use thiserror::Error;

/// Errors raised by the sensing library.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("invalid parameter `{name}`: {reason}")]
    InvalidParameter { name: &'static str, reason: String },

    #[error("dimension mismatch: expected {expected} entries, found {found}")]
    DimensionMismatch { expected: usize, found: usize },

    #[error("no active user (every user has zero samples or zero gain)")]
    NoActiveUser,

    #[error("unequal priors are not supported by the fusion threshold (pi0 = {pi0}, pi1 = {pi1})")]
    UnequalPriors { pi0: f64, pi1: f64 },

    #[error("integration did not converge: {0}")]
    Quadrature(String),

    #[error("numerical failure: {0}")]
    Numerical(String),

    #[error("iteration limit of {0} reached before convergence")]
    IterationLimit(usize),
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn invalid(name: &'static str, reason: impl Into<String>) -> Error {
    Error::InvalidParameter {
        name,
        reason: reason.into(),
    }
}
