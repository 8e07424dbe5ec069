use std::io;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum MotionError {
    #[error("configuration error: {0}")]
    Config(String),
    #[error("shape error: {0}")]
    Shape(String),
    #[error("homography estimation failed: {0}")]
    EstimationFailed(String),
    #[error("format error: {0}")]
    Format(String),
    #[error(transparent)]
    Io(#[from] io::Error),
}

pub type Result<T> = std::result::Result<T, MotionError>;
