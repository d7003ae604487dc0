//! Set Transformer beamformer for cell-free ISAC, trained without labels on
//! differentiable rate losses.

pub mod checkpoint;
pub mod error;
pub mod loss;
pub mod model;
pub mod train;

pub use checkpoint::Checkpoint;
pub use error::{Result, StcibError};
pub use loss::Penalty;
pub use model::{Architecture, Model};
pub use train::{train, TrainReport, TrainSpec};
