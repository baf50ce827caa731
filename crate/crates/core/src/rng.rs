//! Seeded random streams.
//!
//! Every random draw in the crate comes from ChaCha8 (`rand_chacha`), keyed by
//! the user seed (expanded with `seed_from_u64`) and placed on a 64-bit stream
//! id built from a purpose tag and an index. Two streams with different
//! `(domain, index)` pairs are independent, and the sequence for a given
//! triple is identical on every platform.

use alloc::vec::Vec;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use crate::error::{domain, Result};
use crate::tensor::{Shape, Tensor4};

pub type NoiseRng = ChaCha8Rng;

/// Purpose tag mixed into the stream id.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[repr(u64)]
pub enum Domain {
    Init = 1,
    Shuffle = 2,
    TrainNoise = 3,
    Certify = 4,
    Predict = 5,
    Audit = 6,
    Attack = 7,
    Data = 8,
    Test = 15,
}

pub fn stream(seed: u64, domain: Domain, index: u64) -> NoiseRng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(((domain as u64) << 56) ^ index);
    rng
}

/// Fills `buf` with i.i.d. `N(0, sigma²)` draws.
pub fn fill_gaussian(buf: &mut [f64], sigma: f64, rng: &mut NoiseRng) {
    for v in buf.iter_mut() {
        let e: f64 = rng.sample(StandardNormal);
        *v = sigma * e;
    }
}

pub fn gaussian_vec(len: usize, sigma: f64, rng: &mut NoiseRng) -> Vec<f64> {
    let mut v = alloc::vec![0.0; len];
    fill_gaussian(&mut v, sigma, rng);
    v
}

/// Tensor of i.i.d. `N(0, sigma²)` entries.
pub fn gaussian_sample(shape: Shape, sigma: f64, rng: &mut NoiseRng) -> Result<Tensor4> {
    if !(sigma >= 0.0) || !sigma.is_finite() {
        return Err(domain("noise standard deviation must be finite and non-negative"));
    }
    let mut t = Tensor4::zeros(shape);
    if sigma > 0.0 {
        fill_gaussian(t.data_mut(), sigma, rng);
    }
    Ok(t)
}
