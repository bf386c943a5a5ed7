//! Portable seeded randomness.
//!
//! Every randomized operation draws from ChaCha8 keyed by the 64-bit seed
//! (little-endian in key bytes 0..8, remaining key bytes zero) with the
//! 64-bit ChaCha stream id selecting an independent sequence. Integers in
//! `[0, n)` are produced by rejection sampling on `next_u64`, so selections can
//! be reproduced by any ChaCha8 implementation.

use rand::RngCore;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

pub use rand_chacha::ChaCha8Rng as Generator;

/// ChaCha8 keyed by `seed` on stream `stream`.
pub fn generator(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut key = [0u8; 32];
    key[..8].copy_from_slice(&seed.to_le_bytes());
    let mut rng = ChaCha8Rng::from_seed(key);
    rng.set_stream(stream);
    rng
}

/// Uniform integer in `[0, n)`. `n` must be positive.
pub fn below<R: RngCore>(rng: &mut R, n: u64) -> u64 {
    assert!(n > 0, "empty range");
    // Largest multiple of n that fits; draws at or above it are rejected.
    let zone = u64::MAX - (u64::MAX % n + 1) % n;
    loop {
        let v = rng.next_u64();
        if v <= zone {
            return v % n;
        }
    }
}

/// Uniform double in `[0, 1)` with 53 random bits.
pub fn unit<R: RngCore>(rng: &mut R) -> f64 {
    (rng.next_u64() >> 11) as f64 * (1.0 / (1u64 << 53) as f64)
}

/// Uniform double in `[lo, hi)`.
pub fn uniform<R: RngCore>(rng: &mut R, lo: f64, hi: f64) -> f64 {
    lo + (hi - lo) * unit(rng)
}

pub fn standard_normal<R: RngCore>(rng: &mut R) -> f64 {
    StandardNormal.sample(rng)
}
