//! Crate-wide error type for the layers above the tensor engine.

use thiserror::Error;

use crate::tensor::TensorError;

#[derive(Debug, Error)]
pub enum DrcnError {
    #[error(transparent)]
    Tensor(#[from] TensorError),
    #[error("I/O error on {path}: {source}")]
    Io { path: String, source: std::io::Error },
    #[error("format error: {0}")]
    Format(String),
    #[error("empty dataset: {0}")]
    EmptyDataset(String),
    #[error("configuration error: {0}")]
    Config(String),
    #[error("numeric abort: {0}")]
    Numeric(String),
}

pub type Result<T> = std::result::Result<T, DrcnError>;

impl DrcnError {
    pub fn io(path: impl Into<String>, source: std::io::Error) -> Self {
        DrcnError::Io { path: path.into(), source }
    }
}
