use thiserror::Error;

#[derive(Debug, Error)]
pub enum TensorError {
    #[error("invalid shape {shape:?}: {reason}")]
    InvalidShape { shape: Vec<usize>, reason: String },

    #[error("shape mismatch in {op}: {detail}")]
    ShapeMismatch { op: &'static str, detail: String },

    #[error("invalid geometry in {op}: {detail}")]
    InvalidGeometry { op: &'static str, detail: String },

    #[error("index {index} out of range {bound} in {op}")]
    OutOfRange {
        op: &'static str,
        index: usize,
        bound: usize,
    },

    #[error("non-finite value produced by {op} (node {node})")]
    NonFinite { op: &'static str, node: usize },

    #[error("contract violation: {0}")]
    Contract(String),

    #[error("sptn format error: {0}")]
    Format(String),

    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, TensorError>;

pub(crate) fn mismatch(op: &'static str, detail: impl Into<String>) -> TensorError {
    TensorError::ShapeMismatch {
        op,
        detail: detail.into(),
    }
}

pub(crate) fn geometry(op: &'static str, detail: impl Into<String>) -> TensorError {
    TensorError::InvalidGeometry {
        op,
        detail: detail.into(),
    }
}
