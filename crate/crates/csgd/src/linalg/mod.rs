//! Dense vectors and matrices, seeded randomness, extreme-eigenpair
//! estimation, and finite-difference differentiation.
//!
//! Everything here is deliberately minimal: the optimizer works with dense
//! `f64` vectors of moderate dimension, and the only spectral quantity the
//! rest of the crate needs is the smallest eigenvalue of a symmetric Hessian.

mod eigen;
mod fd;
mod rng;

pub use eigen::{min_eigenpair, spectral_norm};
pub use fd::fd_gradient;
pub use rng::{gaussian_vector, purpose, stream_id, SeededRng};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Dense d-dimensional real vector (parameters, gradients, noise, errors).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ParamVector(Vec<f64>);

impl ParamVector {
    pub fn zeros(d: usize) -> Self {
        ParamVector(vec![0.0; d])
    }

    pub fn from_vec(data: Vec<f64>) -> Self {
        ParamVector(data)
    }

    pub fn constant(d: usize, v: f64) -> Self {
        ParamVector(vec![v; d])
    }

    pub fn dim(&self) -> usize {
        self.0.len()
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    pub fn as_mut_slice(&mut self) -> &mut [f64] {
        &mut self.0
    }

    pub fn is_finite(&self) -> bool {
        self.0.iter().all(|v| v.is_finite())
    }

    pub fn dot(&self, other: &ParamVector) -> f64 {
        debug_assert_eq!(self.dim(), other.dim());
        self.0.iter().zip(&other.0).map(|(a, b)| a * b).sum()
    }

    pub fn norm_sq(&self) -> f64 {
        self.0.iter().map(|v| v * v).sum()
    }

    pub fn norm(&self) -> f64 {
        self.norm_sq().sqrt()
    }

    pub fn norm_l1(&self) -> f64 {
        self.0.iter().map(|v| v.abs()).sum()
    }

    pub fn norm_linf(&self) -> f64 {
        self.0.iter().fold(0.0, |m, v| m.max(v.abs()))
    }

    pub fn scale(&self, a: f64) -> ParamVector {
        ParamVector(self.0.iter().map(|v| a * v).collect())
    }

    pub fn add(&self, other: &ParamVector) -> ParamVector {
        debug_assert_eq!(self.dim(), other.dim());
        ParamVector(self.0.iter().zip(&other.0).map(|(a, b)| a + b).collect())
    }

    pub fn sub(&self, other: &ParamVector) -> ParamVector {
        debug_assert_eq!(self.dim(), other.dim());
        ParamVector(self.0.iter().zip(&other.0).map(|(a, b)| a - b).collect())
    }

    /// self + a * other
    pub fn add_scaled(&self, a: f64, other: &ParamVector) -> ParamVector {
        debug_assert_eq!(self.dim(), other.dim());
        ParamVector(
            self.0
                .iter()
                .zip(&other.0)
                .map(|(x, y)| x + a * y)
                .collect(),
        )
    }

    /// Normalize to unit Euclidean norm. Zero vectors are left unchanged.
    pub fn normalized(&self) -> ParamVector {
        let n = self.norm();
        if n == 0.0 {
            self.clone()
        } else {
            self.scale(1.0 / n)
        }
    }
}

impl std::ops::Index<usize> for ParamVector {
    type Output = f64;
    fn index(&self, i: usize) -> &f64 {
        &self.0[i]
    }
}

impl std::ops::IndexMut<usize> for ParamVector {
    fn index_mut(&mut self, i: usize) -> &mut f64 {
        &mut self.0[i]
    }
}

/// Symmetric d x d matrix in row-major order. Used to hold Hessians.
#[derive(Debug, Clone, PartialEq)]
pub struct DenseMatrix {
    entries: Vec<f64>,
    dim: usize,
}

impl DenseMatrix {
    pub fn zeros(d: usize) -> Self {
        DenseMatrix {
            entries: vec![0.0; d * d],
            dim: d,
        }
    }

    pub fn identity(d: usize) -> Self {
        let mut m = Self::zeros(d);
        for i in 0..d {
            m.entries[i * d + i] = 1.0;
        }
        m
    }

    pub fn from_diagonal(diag: &[f64]) -> Self {
        let d = diag.len();
        let mut m = Self::zeros(d);
        for (i, v) in diag.iter().enumerate() {
            m.entries[i * d + i] = *v;
        }
        m
    }

    pub fn from_rows(rows: Vec<Vec<f64>>) -> Result<Self> {
        let d = rows.len();
        for r in &rows {
            if r.len() != d {
                return Err(Error::DimensionMismatch {
                    expected: d,
                    got: r.len(),
                });
            }
        }
        Ok(DenseMatrix {
            entries: rows.into_iter().flatten().collect(),
            dim: d,
        })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.entries[i * self.dim + j]
    }

    pub fn set(&mut self, i: usize, j: usize, v: f64) {
        self.entries[i * self.dim + j] = v;
    }

    pub fn matvec(&self, x: &ParamVector) -> ParamVector {
        debug_assert_eq!(self.dim, x.dim());
        let d = self.dim;
        let out = self
            .entries
            .chunks_exact(d)
            .map(|row| row.iter().zip(x.as_slice()).map(|(a, b)| a * b).sum())
            .collect();
        ParamVector(out)
    }

    /// Largest absolute off-symmetry |H_ij - H_ji|, used to validate Hessians.
    pub fn asymmetry(&self) -> f64 {
        let d = self.dim;
        let mut worst = 0.0f64;
        for i in 0..d {
            for j in (i + 1)..d {
                worst = worst.max((self.get(i, j) - self.get(j, i)).abs());
            }
        }
        worst
    }

    pub fn max_abs_entry(&self) -> f64 {
        self.entries.iter().fold(0.0, |m, v| m.max(v.abs()))
    }

    /// Q * diag(spectrum) * Q^T for a seeded random rotation Q
    /// (orthonormalized Gaussian matrix). `rotation_seed = None` keeps the
    /// matrix diagonal.
    pub fn from_spectrum(spectrum: &[f64], rotation_seed: Option<u64>) -> Self {
        let d = spectrum.len();
        let seed = match rotation_seed {
            None => return Self::from_diagonal(spectrum),
            Some(s) => s,
        };
        // Gram-Schmidt on a seeded Gaussian matrix; d stays small so the
        // classical procedure is accurate enough.
        let mut rng = SeededRng::new(seed, stream_id(&[rng::purpose::ROTATION]));
        let mut q: Vec<ParamVector> = Vec::with_capacity(d);
        while q.len() < d {
            let mut v = rng.standard_normal_vector(d);
            for u in &q {
                let c = v.dot(u);
                v = v.add_scaled(-c, u);
            }
            let n = v.norm();
            if n > 1e-8 {
                q.push(v.scale(1.0 / n));
            }
        }
        let mut m = Self::zeros(d);
        for i in 0..d {
            for j in 0..d {
                let mut s = 0.0;
                for (l, lam) in spectrum.iter().enumerate() {
                    s += q[l][i] * lam * q[l][j];
                }
                m.set(i, j, s);
            }
        }
        // Exact symmetry by construction of the sum, up to rounding; enforce it.
        for i in 0..d {
            for j in (i + 1)..d {
                let avg = 0.5 * (m.get(i, j) + m.get(j, i));
                m.set(i, j, avg);
                m.set(j, i, avg);
            }
        }
        m
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn vector_ops() {
        let a = ParamVector::from_vec(vec![1.0, -2.0, 3.0]);
        let b = ParamVector::from_vec(vec![0.5, 0.5, 0.5]);
        assert_eq!(a.dim(), 3);
        assert_relative_eq!(a.dot(&b), 1.0);
        assert_relative_eq!(a.norm_sq(), 14.0);
        assert_relative_eq!(a.norm_l1(), 6.0);
        assert_relative_eq!(a.norm_linf(), 3.0);
        assert_eq!(a.add_scaled(2.0, &b).as_slice(), &[2.0, -1.0, 4.0]);
    }

    #[test]
    fn matvec_diagonal() {
        let h = DenseMatrix::from_diagonal(&[2.0, -1.0]);
        let x = ParamVector::from_vec(vec![3.0, 4.0]);
        assert_eq!(h.matvec(&x).as_slice(), &[6.0, -4.0]);
    }

    #[test]
    fn rotated_spectrum_preserves_eigenvalues() {
        let h = DenseMatrix::from_spectrum(&[1.0, -0.5], Some(3));
        // trace and determinant identify the 2x2 spectrum
        let tr = h.get(0, 0) + h.get(1, 1);
        let det = h.get(0, 0) * h.get(1, 1) - h.get(0, 1) * h.get(1, 0);
        assert_relative_eq!(tr, 0.5, epsilon = 1e-12);
        assert_relative_eq!(det, -0.5, epsilon = 1e-12);
        assert!(h.asymmetry() <= 1e-12 * h.max_abs_entry().max(1.0));
    }
}
