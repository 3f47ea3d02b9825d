use std::path::PathBuf;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum HarnessError {
    #[error(transparent)]
    Tensor(#[from] bevmos_tensor::TensorError),
    #[error(transparent)]
    Model(#[from] bevmos_model::ModelError),
    #[error(transparent)]
    Synth(#[from] bevmos_synth::SynthError),
    #[error("config error: {0}")]
    Config(String),
    #[error("config `{path}` line {line}: {message}")]
    ConfigParse {
        path: PathBuf,
        line: usize,
        message: String,
    },
    #[error("checkpoint mismatch for `{name}`: {message}")]
    CheckpointMismatch { name: String, message: String },
    #[error("training aborted at iteration {iteration}: non-finite loss (diagnostics in {dump})")]
    NanLoss { iteration: usize, dump: PathBuf },
    #[error("io error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("{0}")]
    Other(String),
}

pub type Result<T> = std::result::Result<T, HarnessError>;

pub fn io_err(path: impl Into<PathBuf>) -> impl FnOnce(std::io::Error) -> HarnessError {
    let path = path.into();
    move |source| HarnessError::Io { path, source }
}
