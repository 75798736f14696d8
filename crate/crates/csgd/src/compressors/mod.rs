//! Gradient compressors and their communication cost model.
//!
//! A mu-compressor is a randomized map C with
//! `E||x - C(x)||^2 <= (1 - mu) ||x||^2`; larger mu preserves more of the
//! vector. `Identity`, `RandomK`, `TopK` and `Sign` are mu-compressors with
//! mu = 1, k/d, k/d and 1/d respectively. `Quantization` is unbiased but not
//! a mu-compressor (its error can exceed ||x||), so the planner refuses it;
//! it is kept behind the same interface for experimentation.
//!
//! Compression randomness is drawn *before* compressing
//! ([`CompressorSpec::draw`]) so that simulated workers can share the
//! realized randomness of a round, and so linearity in `x` can be tested at
//! fixed randomness. The compressed vector returned by [`compress_with`] is
//! materialized by decoding the wire message, which makes the codec
//! round-trip bit-exact by construction.

mod message;

pub use message::{CompressedMessage, Payload};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{ParamVector, SeededRng};
use crate::parallel;

/// Which compressor, plus its size parameters.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum CompressorKind {
    Identity,
    /// Keep k uniformly random coordinates (shared randomness; linear).
    RandomK {
        k: usize,
    },
    /// Keep the k largest-magnitude coordinates; ties broken by lower index.
    TopK {
        k: usize,
    },
    /// (||x||_1 / d) * sign(x).
    Sign,
    /// Stochastic rounding against s buckets of [0, ||x||]. Unbiased.
    Quantization {
        s: usize,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct CompressorSpec {
    pub kind: CompressorKind,
    pub d: usize,
}

/// Realized compressor randomness (theta-tilde) for one application.
#[derive(Debug, Clone, PartialEq)]
pub enum CompressorDraw {
    /// Deterministic compressors.
    None,
    /// RandomK: the k selected coordinates, sorted ascending.
    Indices(Vec<u32>),
    /// Quantization: one uniform per coordinate.
    Uniforms(Vec<f64>),
}

impl CompressorSpec {
    pub fn new(kind: CompressorKind, d: usize) -> Result<Self> {
        if d == 0 {
            return Err(Error::parameter("compressor dimension must be >= 1"));
        }
        match kind {
            CompressorKind::RandomK { k } | CompressorKind::TopK { k } if k == 0 || k > d => {
                return Err(Error::parameter(format!(
                    "sparsifier requires 1 <= k <= d, got k={k}, d={d}"
                )));
            }
            CompressorKind::Quantization { s: 0 } => {
                return Err(Error::parameter("quantization requires s >= 1"));
            }
            _ => {}
        }
        Ok(CompressorSpec { kind, d })
    }

    /// Compression factor mu in (0, 1]. `None` for Quantization, which does
    /// not satisfy the contraction inequality.
    pub fn mu(&self) -> Option<f64> {
        match self.kind {
            CompressorKind::Identity => Some(1.0),
            CompressorKind::RandomK { k } | CompressorKind::TopK { k } => {
                Some(k as f64 / self.d as f64)
            }
            CompressorKind::Sign => Some(1.0 / self.d as f64),
            CompressorKind::Quantization { .. } => None,
        }
    }

    /// True exactly when C(., theta-tilde) is a linear map for every draw.
    pub fn is_linear(&self) -> bool {
        matches!(
            self.kind,
            CompressorKind::Identity | CompressorKind::RandomK { .. }
        )
    }

    /// Per-message cost in bits for kinds whose cost does not depend on the
    /// message content. Quantization reports its cost per message instead
    /// (see [`CompressedMessage::cost_bits`]).
    ///
    /// Identity: d*vb. RandomK under shared randomness: k*vb (indices are
    /// reconstructed from the shared seed). TopK: k*(vb + ceil(log2 d)).
    /// Sign: d + vb.
    pub fn message_cost_bits(&self, value_bits: u32) -> Option<u64> {
        debug_assert!(value_bits == 32 || value_bits == 64);
        let vb = value_bits as u64;
        let d = self.d as u64;
        match self.kind {
            CompressorKind::Identity => Some(d * vb),
            CompressorKind::RandomK { k } => Some(k as u64 * vb),
            CompressorKind::TopK { k } => Some(k as u64 * (vb + ceil_log2(self.d))),
            CompressorKind::Sign => Some(d + vb),
            CompressorKind::Quantization { .. } => None,
        }
    }

    /// Draw the compressor randomness for one application from `rng`.
    /// The number of draws consumed is a function of the spec alone, so a
    /// stream can be shared deterministically across workers.
    pub fn draw(&self, rng: &mut SeededRng) -> CompressorDraw {
        match self.kind {
            CompressorKind::RandomK { k } => {
                CompressorDraw::Indices(rng.sample_indices_without_replacement(self.d, k))
            }
            CompressorKind::Quantization { .. } => {
                CompressorDraw::Uniforms((0..self.d).map(|_| rng.uniform_f64()).collect())
            }
            _ => CompressorDraw::None,
        }
    }
}

/// Bits needed to address a coordinate index in 0..d.
pub fn ceil_log2(d: usize) -> u64 {
    if d <= 1 {
        0
    } else {
        (usize::BITS - (d - 1).leading_zeros()) as u64
    }
}

/// Compress `x`, drawing fresh randomness from `rng`. 64-bit values.
pub fn compress(
    spec: &CompressorSpec,
    x: &ParamVector,
    rng: &mut SeededRng,
) -> Result<(ParamVector, CompressedMessage)> {
    let draw = spec.draw(rng);
    compress_with(spec, x, &draw, 64)
}

/// Compress `x` at fixed realized randomness `draw`.
///
/// Returns `(c, msg)` where `c = C(x, theta-tilde)` and `msg` decodes to `c`
/// bit-exactly. With `value_bits = 32` the compressor output is defined as
/// the f32-rounded wire values, so the round trip stays exact.
pub fn compress_with(
    spec: &CompressorSpec,
    x: &ParamVector,
    draw: &CompressorDraw,
    value_bits: u32,
) -> Result<(ParamVector, CompressedMessage)> {
    if x.dim() != spec.d {
        return Err(Error::DimensionMismatch {
            expected: spec.d,
            got: x.dim(),
        });
    }
    if value_bits != 32 && value_bits != 64 {
        return Err(Error::parameter("value_bits must be 32 or 64"));
    }
    let payload = match (&spec.kind, draw) {
        (CompressorKind::Identity, CompressorDraw::None) => Payload::Dense {
            values: x.as_slice().to_vec(),
        },
        (CompressorKind::RandomK { k }, CompressorDraw::Indices(idx)) => {
            if idx.len() != *k {
                return Err(Error::parameter(format!(
                    "RandomK draw has {} indices, expected {k}",
                    idx.len()
                )));
            }
            Payload::SparseShared {
                values: idx.iter().map(|&i| x[i as usize]).collect(),
            }
        }
        (CompressorKind::TopK { k }, CompressorDraw::None) => {
            let idx = top_k_indices(x, *k);
            Payload::SparseIndexed {
                values: idx.iter().map(|&i| x[i as usize]).collect(),
                indices: idx,
            }
        }
        (CompressorKind::Sign, CompressorDraw::None) => Payload::SignScale {
            scale: x.norm_l1() / spec.d as f64,
            // sign(0) is encoded as +1; with scale derived from ||x||_1 the
            // contraction factor is unaffected by the convention.
            negatives: x.as_slice().iter().map(|&v| v < 0.0).collect(),
        },
        (CompressorKind::Quantization { s }, CompressorDraw::Uniforms(us)) => {
            if us.len() != spec.d {
                return Err(Error::parameter(format!(
                    "Quantization draw has {} uniforms, expected {}",
                    us.len(),
                    spec.d
                )));
            }
            quantize(x, *s, us)
        }
        (kind, _) => {
            return Err(Error::parameter(format!(
                "draw does not match compressor kind {kind:?}"
            )))
        }
    };
    let msg = CompressedMessage::new(spec, payload, value_bits);
    let c = msg.decode(spec, draw)?;
    Ok((c, msg))
}

/// Indices of the k largest-|value| coordinates, lower index winning ties,
/// returned sorted ascending.
fn top_k_indices(x: &ParamVector, k: usize) -> Vec<u32> {
    let mut idx: Vec<u32> = (0..x.dim() as u32).collect();
    // sort by (-|v|, index); stable ordering makes the tie-break explicit
    idx.sort_by(|&a, &b| {
        let va = x[a as usize].abs();
        let vb = x[b as usize].abs();
        vb.partial_cmp(&va).unwrap().then(a.cmp(&b))
    });
    let mut picked = idx[..k].to_vec();
    picked.sort_unstable();
    picked
}

/// Stochastic rounding of |x_i| against s equal buckets of [0, ||x||]:
/// level_i = floor(|x_i| s / ||x||), rounded up with the probability that
/// preserves the expectation. Zero input maps to the zero message.
fn quantize(x: &ParamVector, s: usize, uniforms: &[f64]) -> Payload {
    let norm = x.norm();
    let mut indices = Vec::new();
    let mut negatives = Vec::new();
    let mut levels = Vec::new();
    if norm > 0.0 {
        for (i, (&v, &u)) in x.as_slice().iter().zip(uniforms).enumerate() {
            let a = v.abs() * s as f64 / norm;
            let ell = a.floor();
            let p_up = a - ell;
            let level = ell as u64 + u64::from(u < p_up);
            if level > 0 {
                indices.push(i as u32);
                negatives.push(v < 0.0);
                levels.push(level);
            }
        }
    }
    Payload::Quantized {
        indices,
        negatives,
        levels,
        scale: norm,
        s: s as u32,
    }
}

/// Monte-Carlo estimate of the contraction ratio E||x - C(x)||^2 / ||x||^2.
#[derive(Debug, Clone, Serialize)]
pub struct ContractionEstimate {
    pub ratio: f64,
    pub std_err: f64,
    pub used_trials: usize,
    pub zero_trials: usize,
}

/// Estimate the contraction ratio over `trials` draws from `sampler`.
/// Trials whose sampled vector is zero are skipped and counted separately.
pub fn compression_factor_estimate<F>(
    spec: &CompressorSpec,
    sampler: F,
    trials: usize,
    rng: &SeededRng,
) -> Result<ContractionEstimate>
where
    F: Fn(&mut SeededRng) -> ParamVector + Sync + Send,
{
    if trials == 0 {
        return Err(Error::parameter("trials must be >= 1"));
    }
    let ratios = parallel::map_indexed(trials, |i| {
        let mut trial_rng = rng.derive(&[crate::linalg::purpose::TRIAL, i as u64]);
        let x = sampler(&mut trial_rng);
        if x.norm_sq() == 0.0 {
            return None;
        }
        let (c, _) = compress(spec, &x, &mut trial_rng).expect("sampler dimension mismatch");
        Some(x.sub(&c).norm_sq() / x.norm_sq())
    });
    let kept: Vec<f64> = ratios.iter().flatten().copied().collect();
    let zero_trials = trials - kept.len();
    if kept.is_empty() {
        return Err(Error::parameter(
            "all sampled vectors were zero; cannot estimate contraction",
        ));
    }
    let n = kept.len() as f64;
    let mean = kept.iter().sum::<f64>() / n;
    let var = kept.iter().map(|r| (r - mean).powi(2)).sum::<f64>() / (n - 1.0).max(1.0);
    Ok(ContractionEstimate {
        ratio: mean,
        std_err: (var / n).sqrt(),
        used_trials: kept.len(),
        zero_trials,
    })
}

#[cfg(test)]
mod tests;
