//! Hermitian eigensolver and 2D MUSIC angle estimation.

pub mod eig;
pub mod music;

pub use eig::{hermitian_eig, HermitianEigen};
pub use music::{spectrum, AngleAxis, MusicResult, Peak};
