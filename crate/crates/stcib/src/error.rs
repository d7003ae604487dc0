use cfisac_autodiff::ShapeError;
use cfisac_core::CoreError;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum StcibError {
    #[error(transparent)]
    Shape(#[from] ShapeError),
    #[error(transparent)]
    Core(#[from] CoreError),
    #[error("invalid architecture: {0}")]
    Architecture(String),
    #[error("invalid training spec: {0}")]
    Spec(String),
    #[error("non-finite loss at epoch {epoch}, batch {batch} (lr {lr:e})")]
    NonFinite { epoch: usize, batch: usize, lr: f64 },
    #[error("malformed checkpoint: {0}")]
    Format(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T, E = StcibError> = std::result::Result<T, E>;
