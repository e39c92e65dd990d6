use thiserror::Error;

/// Errors raised by the boosting library.
#[derive(Debug, Error)]
pub enum BviError {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    /// A non-finite value showed up inside a Monte-Carlo estimate.
    #[error("estimator failure: non-finite value {value} at z = {z:?}")]
    EstimatorFailure { z: Vec<f64>, value: f64 },

    #[error("lmo failure: {0}")]
    LmoFailure(String),

    #[error("invalid data: {0}")]
    InvalidData(String),

    #[error("parse error at line {line}: {message}")]
    Parse { line: u64, message: String },

    #[error("undefined metric: {0}")]
    UndefinedMetric(String),

    /// Broken internal invariant (for example a negative mixture weight).
    #[error("internal error: {0}")]
    Internal(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

pub type Result<T> = std::result::Result<T, BviError>;

pub(crate) fn invalid<T>(msg: impl Into<String>) -> Result<T> {
    Err(BviError::InvalidArgument(msg.into()))
}
