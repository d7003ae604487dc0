//! Seeded random streams.
//!
//! Every independent stream (one per sample, per scene, per trial) is derived
//! from a root seed and an index, so parallel generation reproduces the
//! single-threaded result exactly.

use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

pub type Stream = ChaCha8Rng;

/// Stream labels that keep the scene, dataset samples and experiment trials
/// of one root seed apart.
pub mod domain {
    pub const SCENE: u64 = 1;
    pub const SENSING: u64 = 2;
    pub const SAMPLE: u64 = 3;
    pub const INIT: u64 = 4;
    pub const TRIAL: u64 = 5;
    pub const SHUFFLE: u64 = 6;
    pub const PILOT: u64 = 7;
    pub const CSI: u64 = 8;
}

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Mix a root seed with a domain label and an index.
pub fn derive_seed(seed: u64, domain: u64, index: u64) -> u64 {
    splitmix64(splitmix64(splitmix64(seed) ^ domain) ^ index)
}

pub fn stream(seed: u64, domain: u64, index: u64) -> Stream {
    ChaCha8Rng::seed_from_u64(derive_seed(seed, domain, index))
}

/// Circularly symmetric standard complex Gaussian, `E|z|² = 1`.
pub fn complex_normal<R: Rng + ?Sized>(rng: &mut R) -> Complex64 {
    let re: f64 = rng.sample(StandardNormal);
    let im: f64 = rng.sample(StandardNormal);
    Complex64::new(re, im) * std::f64::consts::FRAC_1_SQRT_2
}

/// Unit-power QPSK symbol.
pub fn qpsk<R: Rng + ?Sized>(rng: &mut R) -> Complex64 {
    let s = std::f64::consts::FRAC_1_SQRT_2;
    let re = if rng.random::<bool>() { s } else { -s };
    let im = if rng.random::<bool>() { s } else { -s };
    Complex64::new(re, im)
}
