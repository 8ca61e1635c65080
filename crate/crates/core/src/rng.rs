//! Seeded random sources and the uniform-to-noise transforms.
//!
//! All randomness flows through [`ChaCha8Rng`] so streams are identical across platforms.
//! The noise transforms are written out here instead of delegating to a distribution
//! crate so that a given seed always maps to the same perceived utilities.

use rand::RngCore;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub type SimRng = ChaCha8Rng;

pub fn seeded(seed: u64) -> SimRng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Mixes a base seed with a stream index (round, trial, ...) into an independent seed.
pub fn derive_seed(base: u64, stream: u64) -> u64 {
    splitmix64(base ^ splitmix64(stream.wrapping_add(0x9E37_79B9_7F4A_7C15)))
}

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Uniform draw on the open interval (0, 1) with 53 bits of resolution.
#[inline]
pub fn open_unit<R: RngCore + ?Sized>(rng: &mut R) -> f64 {
    ((rng.next_u64() >> 11) as f64 + 0.5) * (1.0 / (1u64 << 53) as f64)
}

/// Standard Gumbel: `-ln(-ln u)`.
#[inline]
pub fn gumbel<R: RngCore + ?Sized>(rng: &mut R) -> f64 {
    -(-open_unit(rng).ln()).ln()
}

/// Unit-rate exponential: `-ln u`.
#[inline]
pub fn exponential<R: RngCore + ?Sized>(rng: &mut R) -> f64 {
    -open_unit(rng).ln()
}

/// Standard normal through the Box-Muller cosine branch (one normal per two uniforms).
#[inline]
pub fn standard_normal<R: RngCore + ?Sized>(rng: &mut R) -> f64 {
    let u1 = open_unit(rng);
    let u2 = open_unit(rng);
    (-2.0 * u1.ln()).sqrt() * (std::f64::consts::TAU * u2).cos()
}
