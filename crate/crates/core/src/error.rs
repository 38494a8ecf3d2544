use thiserror::Error;

/// Errors produced by cascade construction, fitting, and forecasting.
#[derive(Debug, Error)]
pub enum Error {
    #[error("cascade must contain at least one event")]
    EmptyCascade,
    #[error("event times must start at 0 and be non-decreasing (offending index {0})")]
    UnorderedTimes(usize),
    #[error("event time at index {index} is not a finite non-negative number: {value}")]
    InvalidTime { index: usize, value: f64 },
    #[error("horizon must be positive, got {0}")]
    InvalidHorizon(f64),
    #[error("event at {event} is not before the observation horizon {horizon}")]
    EventPastHorizon { event: f64, horizon: f64 },
    #[error("branching factor must lie in [0, 1), got {0}")]
    InvalidBranchingFactor(f64),
    #[error("kernel parameter {name} must be positive and finite, got {value}")]
    InvalidKernelParam { name: &'static str, value: f64 },
    #[error("domain error: {0}")]
    Domain(String),
    #[error("empty input: {0}")]
    EmptyInput(&'static str),
    #[error("cascade sizes must be positive integers")]
    ZeroSize,
    #[error("no cascade with at least two events")]
    InsufficientData,
    #[error("length mismatch: {0} vs {1}")]
    LengthMismatch(usize, usize),
    #[error("embeddings were built with different bin edges")]
    EdgeMismatch,
    #[error("log-likelihood is -inf: an observed event has zero intensity")]
    LogZeroIntensity,
    #[error("absolute relative error undefined for actual = 0")]
    UndefinedMetric,
}

pub type Result<T> = core::result::Result<T, Error>;
