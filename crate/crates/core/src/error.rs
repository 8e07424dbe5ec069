use std::io;

use egoms_motion::MotionError;
use egoms_tensor::TensorError;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum CoreError {
    /// Bad configuration or arguments; nothing was computed.
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error("contract violation: {0}")]
    Contract(String),
    #[error("non-finite {term} loss at epoch {epoch}, batch {batch}")]
    NonFiniteLoss {
        epoch: usize,
        batch: usize,
        term: &'static str,
    },
    #[error("dataset error: {0}")]
    Data(String),
    #[error(transparent)]
    Tensor(#[from] TensorError),
    #[error(transparent)]
    Motion(#[from] MotionError),
    #[error(transparent)]
    Io(#[from] io::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl CoreError {
    /// True for errors caused by user input rather than by a failed computation.
    pub fn is_validation(&self) -> bool {
        matches!(
            self,
            CoreError::Config(_) | CoreError::Motion(MotionError::Config(_))
        )
    }
}

pub type Result<T> = std::result::Result<T, CoreError>;
