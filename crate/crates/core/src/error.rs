use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("cell count must be at least 1")]
    ZeroCells,

    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("time must be non-negative, got {0}")]
    NegativeTime(f64),

    #[error("matrix is not a covariance: min eigenvalue {min_eigenvalue} below tolerance {tolerance}")]
    NotCovariance { min_eigenvalue: f64, tolerance: f64 },

    #[error("empty sample")]
    EmptySample,

    #[error("need at least {need} paths, got {got}")]
    TooFewPaths { need: usize, got: usize },

    #[error("invalid parameter `{name}`: {reason}")]
    InvalidParameter { name: &'static str, reason: String },

    #[error("path {path} overflowed at step {step} (|x| > {limit})")]
    Overflow { path: u64, step: u64, limit: f64 },

    #[error("series must contain at least {need} points, got {got}")]
    ShortSeries { need: usize, got: usize },
}

impl Error {
    pub(crate) fn param(name: &'static str, reason: impl Into<String>) -> Self {
        Error::InvalidParameter { name, reason: reason.into() }
    }
}
