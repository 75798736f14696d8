//! Central-difference gradients, the independent oracle for analytic
//! gradient checks.

use crate::linalg::ParamVector;

/// Central-difference gradient with per-coordinate step `h * (1 + |x_i|)`.
/// Central differences are exact on quadratics up to rounding, which keeps
/// gradient-check tolerances simple.
pub fn fd_gradient<F>(f: F, x: &ParamVector, h: f64) -> ParamVector
where
    F: Fn(&ParamVector) -> f64,
{
    assert!(h > 0.0, "fd_gradient requires h > 0");
    let d = x.dim();
    let mut grad = vec![0.0; d];
    let mut probe = x.clone();
    for i in 0..d {
        let hi = h * (1.0 + x[i].abs());
        let orig = probe[i];
        probe[i] = orig + hi;
        let fp = f(&probe);
        probe[i] = orig - hi;
        let fm = f(&probe);
        probe[i] = orig;
        grad[i] = (fp - fm) / (2.0 * hi);
    }
    ParamVector::from_vec(grad)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn half_norm_sq(x: &ParamVector) -> f64 {
        0.5 * x.norm_sq()
    }

    fn double_well(x: &ParamVector) -> f64 {
        x.as_slice()
            .iter()
            .map(|v| v.powi(4) / 4.0 - v * v / 2.0)
            .sum()
    }

    #[test]
    fn quadratic_is_exact() {
        let x = ParamVector::from_vec(vec![1.0, 2.0]);
        let g = fd_gradient(half_norm_sq, &x, 1e-5);
        assert!((g[0] - 1.0).abs() < 1e-8);
        assert!((g[1] - 2.0).abs() < 1e-8);
    }

    #[test]
    fn double_well_origin_is_stationary() {
        let x = ParamVector::zeros(3);
        let g = fd_gradient(double_well, &x, 1e-5);
        for i in 0..3 {
            assert!(g[i].abs() < 1e-10, "coordinate {i}: {}", g[i]);
        }
    }

    #[test]
    fn double_well_matches_analytic_derivative() {
        // analytic: x^3 - x = 6 at x = 2
        let x = ParamVector::from_vec(vec![2.0]);
        let g = fd_gradient(double_well, &x, 1e-5);
        assert!((g[0] - 6.0).abs() < 1e-6, "got {}", g[0]);
    }
}
