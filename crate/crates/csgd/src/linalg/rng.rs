//! Counter-based seeded randomness with independent, addressable streams.
//!
//! Every random draw in the crate comes from a `SeededRng` identified by a
//! `(seed, stream)` pair. Streams are derived from structured addresses
//! (purpose, iteration, worker, ...) via [`stream_id`], so any consumer can
//! reproduce any draw from the root seed alone. This is what makes shared
//! compressor randomness work across simulated workers: they all derive the
//! identical stream for iteration t without communicating.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use crate::error::{Error, Result};
use crate::linalg::ParamVector;

/// Stream-address namespaces. Keeping them in one place avoids collisions.
pub mod purpose {
    /// Stochastic gradient draw theta_t (per worker).
    pub const THETA: u64 = 0x01;
    /// Artificial noise xi_t (shared across workers).
    pub const XI: u64 = 0x02;
    /// Compressor randomness theta-tilde_t (shared across workers).
    pub const THETA_TILDE: u64 = 0x03;
    /// Initial point draws.
    pub const INIT: u64 = 0x04;
    /// Monte-Carlo trial streams (compression factor estimates etc).
    pub const TRIAL: u64 = 0x05;
    /// Per-seed root derivation in multi-seed sweeps.
    pub const SWEEP: u64 = 0x06;
    /// Random rotations for synthetic Hessians.
    pub const ROTATION: u64 = 0x07;
    /// Deterministic start vectors for power iteration.
    pub const EIGEN: u64 = 0x08;
    /// Coordinator downlink compression randomness.
    pub const DOWNLINK: u64 = 0x09;
}

/// splitmix64 finalizer; a small, well-mixed hash for stream addresses.
fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Hash a structured address (purpose, iteration, worker, ...) into a
/// 64-bit stream id.
pub fn stream_id(parts: &[u64]) -> u64 {
    let mut acc = 0x243F_6A88_85A3_08D3; // arbitrary nonzero start
    for p in parts {
        acc = splitmix64(acc ^ p.wrapping_mul(0x9E37_79B9_7F4A_7C15));
    }
    acc
}

/// Seeded, stream-addressed random generator.
///
/// Identical `(seed, stream)` pairs produce identical draw sequences on every
/// platform (guaranteed by the ChaCha stream cipher construction).
#[derive(Debug, Clone)]
pub struct SeededRng {
    seed: u64,
    stream: u64,
    inner: ChaCha8Rng,
}

impl SeededRng {
    pub fn new(seed: u64, stream: u64) -> Self {
        let mut inner = ChaCha8Rng::seed_from_u64(seed);
        inner.set_stream(stream);
        SeededRng {
            seed,
            stream,
            inner,
        }
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn stream(&self) -> u64 {
        self.stream
    }

    /// Fresh generator for a sub-address of this generator's stream.
    pub fn derive(&self, parts: &[u64]) -> SeededRng {
        let mut addr = vec![self.stream];
        addr.extend_from_slice(parts);
        SeededRng::new(self.seed, stream_id(&addr))
    }

    /// Uniform in [0, 1).
    pub fn uniform_f64(&mut self) -> f64 {
        self.inner.random::<f64>()
    }

    /// Uniform integer in [0, n).
    pub fn uniform_usize(&mut self, n: usize) -> usize {
        self.inner.random_range(0..n)
    }

    pub fn standard_normal(&mut self) -> f64 {
        self.inner.sample(StandardNormal)
    }

    pub fn standard_normal_vector(&mut self, d: usize) -> ParamVector {
        ParamVector::from_vec((0..d).map(|_| self.standard_normal()).collect())
    }

    /// First k entries of a Fisher-Yates shuffle of 0..d: a uniform draw of
    /// k distinct indices. Returned sorted ascending for deterministic
    /// downstream iteration.
    pub fn sample_indices_without_replacement(&mut self, d: usize, k: usize) -> Vec<u32> {
        debug_assert!(k <= d);
        let mut idx: Vec<u32> = (0..d as u32).collect();
        for i in 0..k {
            let j = i + self.uniform_usize(d - i);
            idx.swap(i, j);
        }
        let mut picked = idx[..k].to_vec();
        picked.sort_unstable();
        picked
    }
}

/// Vector with i.i.d. N(0, per_coord_std^2) coordinates, so that
/// E||output||^2 = d * per_coord_std^2.
pub fn gaussian_vector(rng: &mut SeededRng, d: usize, per_coord_std: f64) -> Result<ParamVector> {
    if d == 0 {
        return Err(Error::parameter("gaussian_vector: d must be >= 1"));
    }
    if !per_coord_std.is_finite() || per_coord_std < 0.0 {
        return Err(Error::parameter(format!(
            "gaussian_vector: per-coordinate std must be finite and nonnegative, got {per_coord_std}"
        )));
    }
    if per_coord_std == 0.0 {
        return Ok(ParamVector::zeros(d));
    }
    Ok(ParamVector::from_vec(
        (0..d)
            .map(|_| per_coord_std * rng.standard_normal())
            .collect(),
    ))
}
