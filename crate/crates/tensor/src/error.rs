use thiserror::Error;

#[derive(Debug, Error)]
pub enum TensorError {
    #[error("{op}: shape mismatch, expected {expected}, got {got}")]
    ShapeMismatch {
        op: &'static str,
        expected: String,
        got: String,
    },
    #[error("{op}: invalid argument: {message}")]
    InvalidArgument { op: &'static str, message: String },
    #[error("non-finite value rejected at {context}")]
    NonFinite { context: String },
    #[error("parameter `{name}` has no gradient")]
    MissingGrad { name: String },
    #[error("duplicate parameter name `{name}`")]
    DuplicateName { name: String },
    #[error("checkpoint error in record `{record}`: {message}")]
    Checkpoint { record: String, message: String },
    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, TensorError>;

pub(crate) fn shape_str(shape: &[usize]) -> String {
    let dims: Vec<String> = shape.iter().map(|d| d.to_string()).collect();
    format!("[{}]", dims.join(", "))
}
