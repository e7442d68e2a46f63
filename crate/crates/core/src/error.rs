use thiserror::Error;

use crate::state_evolution::SeTrajectory;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("alpha = {alpha} is not above alpha_min = {alpha_min}")]
    OutOfDomain { alpha: f64, alpha_min: f64 },

    #[error("fixed-point iteration did not converge after {} steps", .trajectory.tau2_sequence.len())]
    NotConverged { trajectory: Box<SeTrajectory> },

    #[error("calibration inversion failed: {0}")]
    NoSolution(String),

    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),

    #[error("iteration diverged at t = {t}")]
    Divergence { t: usize },

    #[error("internal consistency check failed: {0}")]
    InternalConsistency(String),

    #[error("validation error: {0}")]
    Validation(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

pub(crate) fn invalid(msg: impl Into<String>) -> Error {
    Error::InvalidParameter(msg.into())
}
