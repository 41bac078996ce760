use infoplay_core::{MatInfoError, NcError};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum TrainError {
    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),
    #[error("target row {row} sums to {sum}, expected 1")]
    InvalidTarget { row: usize, sum: f64 },
    #[error("smoothing must lie in [0, 1), got {0}")]
    BadEps(f64),
    #[error("row {0} of the auxiliary-loss input is zero")]
    ZeroRow(usize),
    #[error("auxiliary losses need at least 2 samples, got {0}")]
    BatchTooSmall(usize),
    #[error("degenerate histogram or mean prediction: {0}")]
    DegenerateHistogram(String),
    #[error("invalid configuration: {key}: {reason}")]
    ConfigInvalid { key: String, reason: String },
    #[error("non-finite loss at step {0}")]
    NonFiniteLoss(usize),
    #[error("architectures differ: {0}")]
    ArchMismatch(String),
    #[error("sparsity must lie in [0, 1), got {0}")]
    BadSparsity(f64),
    #[error("checkpoint format: {0}")]
    Format(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
    #[error(transparent)]
    MatInfo(#[from] MatInfoError),
    #[error(transparent)]
    Nc(#[from] NcError),
}

impl TrainError {
    pub(crate) fn config(key: &str, reason: impl Into<String>) -> Self {
        TrainError::ConfigInvalid {
            key: key.to_string(),
            reason: reason.into(),
        }
    }
}
