//! Cell-free ISAC system model: channels, MMSE estimation, rate metrics,
//! the ALM-MO manifold benchmark and MUSIC localization.

pub mod almmo;
pub mod channel;
pub mod config;
pub mod dataset;
pub mod error;
pub mod estimation;
pub mod linalg;
pub mod localization;
pub mod metrics;
pub mod rng;

pub use config::{KeyValues, SystemConfig};
pub use error::{CoreError, Result};
