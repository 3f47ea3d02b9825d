use thiserror::Error;

#[derive(Debug, Error)]
pub enum ModelError {
    #[error(transparent)]
    Tensor(#[from] bevmos_tensor::TensorError),
    #[error("{op}: shape mismatch: {message}")]
    Shape { op: &'static str, message: String },
    #[error("{op}: invalid configuration: {message}")]
    Config { op: &'static str, message: String },
    #[error("invalid transform: {0}")]
    BadTransform(String),
    #[error("fusion plan mismatch: {0}")]
    PlanMismatch(String),
}

pub type Result<T> = std::result::Result<T, ModelError>;
