//! Synthetic test objectives with analytic gradients and Hessians, plus
//! stochastic-gradient oracles with controllable variance and controllable
//! smoothness of the stochastic gradient.
//!
//! Certified constants (smoothness L, Hessian-Lipschitz rho, objective range
//! f_max) are computed over an explicit domain box rather than globally: the
//! quartic and cubic terms are not globally smooth, and only the visited
//! region matters at this scale.

use serde::Serialize;

use crate::error::{Error, Result};
use crate::linalg::{
    fd_gradient, min_eigenpair, spectral_norm, DenseMatrix, ParamVector, SeededRng,
};

/// Hard domain box for the non-quadratic objectives.
pub const HARD_DOMAIN_LINF: f64 = 10.0;

const EIGEN_TOL: f64 = 1e-12;
const EIGEN_MAX_ITER: usize = 200_000;

#[derive(Debug, Clone)]
pub enum ObjectiveKind {
    /// f(x) = 1/2 x^T H x
    Quadratic { h: DenseMatrix },
    /// f(x) = 1/2 x^T H x + (rho/6) ||x||^3
    CubicRegQuadratic { h: DenseMatrix, rho: f64 },
    /// f(x) = sum_i (x_i^4 / 4 - x_i^2 / 2); strict saddle at the origin,
    /// minima at +-1 per coordinate.
    DoubleWell,
}

#[derive(Debug, Clone)]
pub struct Objective {
    kind: ObjectiveKind,
    d: usize,
    /// Box half-width over which the constants below are certified.
    domain_radius: f64,
    /// Upper bound on ||grad^2 f||_2 over the domain.
    pub l: f64,
    /// Upper bound on the Hessian-Lipschitz constant over the domain.
    pub rho: f64,
    /// Lower bound on f over the domain.
    pub f_lower: f64,
}

#[derive(Debug, Clone, Copy, Serialize)]
pub struct CertifiedConstants {
    pub l: f64,
    pub rho: f64,
    pub f_max: f64,
}

fn extreme_eigs(h: &DenseMatrix) -> Result<(f64, f64)> {
    let norm = spectral_norm(h, EIGEN_TOL, EIGEN_MAX_ITER)?;
    if norm == 0.0 {
        return Ok((0.0, 0.0));
    }
    let (lam_min, _) = min_eigenpair(h, norm * 1.001, 1e-10, EIGEN_MAX_ITER)?;
    // lam_max = -lam_min(-H); reuse the same routine on the negated matrix
    let mut neg = h.clone();
    for i in 0..h.dim() {
        for j in 0..h.dim() {
            neg.set(i, j, -h.get(i, j));
        }
    }
    let (neg_min, _) = min_eigenpair(&neg, norm * 1.001, 1e-10, EIGEN_MAX_ITER)?;
    Ok((lam_min, -neg_min))
}

impl Objective {
    pub fn quadratic(h: DenseMatrix, domain_radius: f64) -> Result<Self> {
        let d = h.dim();
        if d == 0 {
            return Err(Error::parameter("quadratic objective needs d >= 1"));
        }
        let (lam_min, _) = extreme_eigs(&h)?;
        let l = spectral_norm(&h, EIGEN_TOL, EIGEN_MAX_ITER)?;
        let f_lower = 0.5 * lam_min.min(0.0) * domain_radius * domain_radius;
        Ok(Objective {
            kind: ObjectiveKind::Quadratic { h },
            d,
            domain_radius,
            l,
            rho: 0.0,
            f_lower,
        })
    }

    pub fn cubic_reg_quadratic(h: DenseMatrix, rho: f64, domain_radius: f64) -> Result<Self> {
        let d = h.dim();
        if d == 0 || !(rho > 0.0) {
            return Err(Error::parameter("cubic objective needs d >= 1 and rho > 0"));
        }
        let (lam_min, _) = extreme_eigs(&h)?;
        let h_norm = spectral_norm(&h, EIGEN_TOL, EIGEN_MAX_ITER)?;
        // global lower bound along the worst eigendirection
        let f_lower = if lam_min < 0.0 {
            (2.0 / 3.0) * lam_min.powi(3) / (rho * rho)
        } else {
            0.0
        };
        Ok(Objective {
            kind: ObjectiveKind::CubicRegQuadratic { h, rho },
            d,
            domain_radius,
            l: h_norm + rho * domain_radius,
            rho,
            f_lower,
        })
    }

    pub fn double_well(d: usize, box_halfwidth: f64) -> Result<Self> {
        if d == 0 || !(box_halfwidth > 0.0) {
            return Err(Error::parameter(
                "double well needs d >= 1 and a positive box",
            ));
        }
        let b = box_halfwidth;
        Ok(Objective {
            kind: ObjectiveKind::DoubleWell,
            d,
            domain_radius: b,
            l: (3.0 * b * b - 1.0).max(2.0),
            rho: 6.0 * b,
            f_lower: -(d as f64) / 4.0,
        })
    }

    pub fn dim(&self) -> usize {
        self.d
    }

    pub fn kind(&self) -> &ObjectiveKind {
        &self.kind
    }

    pub fn domain_radius(&self) -> f64 {
        self.domain_radius
    }

    fn check_domain(&self, x: &ParamVector) -> Result<()> {
        if x.dim() != self.d {
            return Err(Error::DimensionMismatch {
                expected: self.d,
                got: x.dim(),
            });
        }
        match self.kind {
            ObjectiveKind::Quadratic { .. } => Ok(()),
            _ => {
                let linf = x.norm_linf();
                if linf > HARD_DOMAIN_LINF {
                    Err(Error::Domain(format!(
                        "||x||_inf = {linf} exceeds the hard box {HARD_DOMAIN_LINF}"
                    )))
                } else {
                    Ok(())
                }
            }
        }
    }

    pub fn value(&self, x: &ParamVector) -> Result<f64> {
        self.check_domain(x)?;
        Ok(match &self.kind {
            ObjectiveKind::Quadratic { h } => 0.5 * x.dot(&h.matvec(x)),
            ObjectiveKind::CubicRegQuadratic { h, rho } => {
                0.5 * x.dot(&h.matvec(x)) + rho / 6.0 * x.norm().powi(3)
            }
            ObjectiveKind::DoubleWell => x
                .as_slice()
                .iter()
                .map(|v| v.powi(4) / 4.0 - v * v / 2.0)
                .sum(),
        })
    }

    pub fn gradient(&self, x: &ParamVector) -> Result<ParamVector> {
        self.check_domain(x)?;
        Ok(match &self.kind {
            ObjectiveKind::Quadratic { h } => h.matvec(x),
            ObjectiveKind::CubicRegQuadratic { h, rho } => {
                h.matvec(x).add_scaled(rho / 2.0 * x.norm(), x)
            }
            ObjectiveKind::DoubleWell => {
                ParamVector::from_vec(x.as_slice().iter().map(|v| v.powi(3) - v).collect())
            }
        })
    }

    pub fn hessian(&self, x: &ParamVector) -> Result<DenseMatrix> {
        self.check_domain(x)?;
        Ok(match &self.kind {
            ObjectiveKind::Quadratic { h } => h.clone(),
            ObjectiveKind::CubicRegQuadratic { h, rho } => {
                // H + (rho/2)(||x|| I + x x^T / ||x||); continuous at 0
                let mut out = h.clone();
                let n = x.norm();
                if n > 0.0 {
                    for i in 0..self.d {
                        for j in 0..self.d {
                            let mut v = out.get(i, j) + rho / 2.0 * x[i] * x[j] / n;
                            if i == j {
                                v += rho / 2.0 * n;
                            }
                            out.set(i, j, v);
                        }
                    }
                }
                out
            }
            ObjectiveKind::DoubleWell => DenseMatrix::from_diagonal(
                &x.as_slice()
                    .iter()
                    .map(|v| 3.0 * v * v - 1.0)
                    .collect::<Vec<_>>(),
            ),
        })
    }

    /// Analytic (f, grad f, grad^2 f) at x.
    pub fn eval(&self, x: &ParamVector) -> Result<(f64, ParamVector, DenseMatrix)> {
        Ok((self.value(x)?, self.gradient(x)?, self.hessian(x)?))
    }

    /// Closed-form certified constants over a ball/box of the given radius.
    pub fn certified_constants(&self, domain_radius: f64) -> Result<CertifiedConstants> {
        if !(domain_radius > 0.0) {
            return Err(Error::parameter("domain_radius must be positive"));
        }
        let r = domain_radius;
        Ok(match &self.kind {
            ObjectiveKind::Quadratic { h } => {
                let (lam_min, lam_max) = extreme_eigs(h)?;
                CertifiedConstants {
                    l: spectral_norm(h, EIGEN_TOL, EIGEN_MAX_ITER)?,
                    rho: 0.0,
                    f_max: 0.5 * (lam_max.max(0.0) - lam_min.min(0.0)) * r * r,
                }
            }
            ObjectiveKind::CubicRegQuadratic { h, rho } => {
                let (lam_min, lam_max) = extreme_eigs(h)?;
                let sup = 0.5 * lam_max.max(0.0) * r * r + rho / 6.0 * r.powi(3);
                let inf = 0.5 * lam_min.min(0.0) * r * r;
                CertifiedConstants {
                    l: spectral_norm(h, EIGEN_TOL, EIGEN_MAX_ITER)? + rho * r,
                    rho: *rho,
                    f_max: sup - inf,
                }
            }
            ObjectiveKind::DoubleWell => {
                let g_at_b = r.powi(4) / 4.0 - r * r / 2.0;
                CertifiedConstants {
                    l: (3.0 * r * r - 1.0).max(2.0),
                    rho: 6.0 * r,
                    f_max: self.d as f64 * (g_at_b.max(0.0) + 0.25),
                }
            }
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum NoiseKind {
    /// grad f(x) + (sigma/sqrt(d)) z, z standard normal: total noise
    /// variance exactly sigma^2, and the stochastic gradient is Lipschitz
    /// with the same constant as f.
    AdditiveGaussian,
    /// d * (d_j f(x)) e_j for uniform j: unbiased, with per-draw Lipschitz
    /// constant d*L. Serves as the non-Lipschitz-in-practice regime.
    CoordinateSampling,
}

#[derive(Debug, Clone)]
pub struct StochasticOracle {
    objective: Objective,
    pub noise: NoiseKind,
    pub sigma: f64,
}

impl StochasticOracle {
    pub fn new(objective: Objective, noise: NoiseKind, sigma: f64) -> Result<Self> {
        if !sigma.is_finite() || sigma < 0.0 {
            return Err(Error::parameter("sigma must be finite and nonnegative"));
        }
        Ok(StochasticOracle {
            objective,
            noise,
            sigma,
        })
    }

    /// Noiseless oracle: the analytic gradient.
    pub fn exact(objective: Objective) -> Self {
        StochasticOracle {
            objective,
            noise: NoiseKind::AdditiveGaussian,
            sigma: 0.0,
        }
    }

    pub fn objective(&self) -> &Objective {
        &self.objective
    }

    /// Whether the Lipschitz-stochastic-gradient assumption holds with a
    /// dimension-free constant.
    pub fn lipschitz_sg(&self) -> bool {
        matches!(self.noise, NoiseKind::AdditiveGaussian)
    }

    /// Lipschitz constant of the per-draw stochastic gradient.
    pub fn ell_tilde(&self) -> f64 {
        match self.noise {
            NoiseKind::AdditiveGaussian => self.objective.l,
            NoiseKind::CoordinateSampling => self.objective.d as f64 * self.objective.l,
        }
    }

    pub fn sample_gradient(&self, x: &ParamVector, rng: &mut SeededRng) -> Result<ParamVector> {
        let grad = self.objective.gradient(x)?;
        let d = self.objective.d;
        Ok(match self.noise {
            NoiseKind::AdditiveGaussian => {
                if self.sigma == 0.0 {
                    grad
                } else {
                    let per_coord = self.sigma / (d as f64).sqrt();
                    let z = rng.standard_normal_vector(d);
                    grad.add_scaled(per_coord, &z)
                }
            }
            NoiseKind::CoordinateSampling => {
                let j = rng.uniform_usize(d);
                let mut out = ParamVector::zeros(d);
                out[j] = d as f64 * grad[j];
                out
            }
        })
    }
}

/// Discrepancy bound used by the gradient checks:
/// max-norm difference <= 1e-5 * (1 + ||grad f||).
pub fn gradient_check(obj: &Objective, x: &ParamVector) -> Result<f64> {
    let analytic = obj.gradient(x)?;
    let fd = fd_gradient(|p| obj.value(p).expect("in-domain probe"), x, 1e-5);
    let diff = analytic.sub(&fd).norm_linf();
    Ok(diff / (1.0 + analytic.norm()))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::{purpose, stream_id};
    use approx::assert_relative_eq;

    fn quad_diag(diag: &[f64]) -> Objective {
        Objective::quadratic(DenseMatrix::from_diagonal(diag), 10.0).unwrap()
    }

    #[test]
    fn double_well_origin_is_a_strict_saddle() {
        let obj = Objective::double_well(3, 2.0).unwrap();
        let (f, g, h) = obj.eval(&ParamVector::zeros(3)).unwrap();
        assert_eq!(f, 0.0);
        assert_eq!(g.norm(), 0.0);
        for i in 0..3 {
            assert_eq!(h.get(i, i), -1.0);
        }
        let (lam, _) = min_eigenpair(&h, obj.l, 1e-10, 10_000).unwrap();
        assert_relative_eq!(lam, -1.0, epsilon = 1e-9);
    }

    #[test]
    fn double_well_minima() {
        let obj = Objective::double_well(2, 2.0).unwrap();
        let ones = ParamVector::constant(2, 1.0);
        let (f, g, h) = obj.eval(&ones).unwrap();
        assert_relative_eq!(f, -0.5);
        assert_eq!(g.norm(), 0.0);
        assert_eq!(h.get(0, 0), 2.0);
        assert_eq!(h.get(1, 1), 2.0);
    }

    #[test]
    fn double_well_single_coordinate() {
        let obj = Objective::double_well(1, 3.0).unwrap();
        let x = ParamVector::from_vec(vec![1.0]);
        let (f, g, h) = obj.eval(&x).unwrap();
        assert_relative_eq!(f, -0.25);
        assert_eq!(g[0], 0.0);
        assert_eq!(h.get(0, 0), 2.0);
    }

    #[test]
    fn quadratic_eval_example() {
        let obj = quad_diag(&[1.0, -0.5]);
        let x = ParamVector::from_vec(vec![2.0, 2.0]);
        let (f, g, h) = obj.eval(&x).unwrap();
        assert_relative_eq!(f, 1.0);
        assert_eq!(g.as_slice(), &[2.0, -1.0]);
        assert_eq!(h.get(0, 0), 1.0);
        assert_eq!(h.get(1, 1), -0.5);
    }

    #[test]
    fn certified_constants_match_closed_forms() {
        let q = quad_diag(&[1.0, -0.5]);
        let c = q.certified_constants(1.0).unwrap();
        assert_relative_eq!(c.l, 1.0, epsilon = 1e-9);
        assert_eq!(c.rho, 0.0);

        let dw = Objective::double_well(4, 2.0).unwrap();
        let c = dw.certified_constants(2.0).unwrap();
        assert_relative_eq!(c.l, 11.0);
        assert_relative_eq!(c.rho, 12.0);

        let h = DenseMatrix::from_diagonal(&[1.0, -1.0]);
        let cu = Objective::cubic_reg_quadratic(h, 1.0, 3.0).unwrap();
        let c = cu.certified_constants(3.0).unwrap();
        assert_relative_eq!(c.l, 4.0, epsilon = 1e-9);
    }

    #[test]
    fn out_of_domain_rejected() {
        let obj = Objective::double_well(2, 2.0).unwrap();
        let far = ParamVector::constant(2, 11.0);
        assert!(matches!(obj.value(&far), Err(Error::Domain(_))));
    }

    #[test]
    fn analytic_gradients_match_finite_differences() {
        let objectives = vec![
            quad_diag(&[1.0, -0.5, 2.0]),
            Objective::cubic_reg_quadratic(
                DenseMatrix::from_spectrum(&[1.0, -1.0, 0.5], Some(2)),
                1.0,
                3.0,
            )
            .unwrap(),
            Objective::double_well(3, 2.0).unwrap(),
        ];
        for obj in &objectives {
            for trial in 0..100u64 {
                let mut rng = SeededRng::new(42, stream_id(&[purpose::TRIAL, trial]));
                let x = rng.standard_normal_vector(3).scale(0.8);
                let rel = gradient_check(obj, &x).unwrap();
                assert!(rel <= 1e-5, "gradient mismatch {rel:e}");
            }
        }
    }

    #[test]
    fn analytic_hessian_matches_gradient_differences() {
        let obj = Objective::cubic_reg_quadratic(
            DenseMatrix::from_spectrum(&[2.0, -0.7, 0.3], Some(9)),
            0.8,
            3.0,
        )
        .unwrap();
        let mut rng = SeededRng::new(7, 0);
        for _ in 0..20 {
            let x = rng.standard_normal_vector(3).scale(0.5);
            let h = obj.hessian(&x).unwrap();
            assert!(h.asymmetry() <= 1e-12 * h.max_abs_entry().max(1.0));
            let eps = 1e-6;
            for j in 0..3 {
                let mut xp = x.clone();
                let mut xm = x.clone();
                xp[j] += eps;
                xm[j] -= eps;
                let gp = obj.gradient(&xp).unwrap();
                let gm = obj.gradient(&xm).unwrap();
                for i in 0..3 {
                    let fd = (gp[i] - gm[i]) / (2.0 * eps);
                    let scale = h.max_abs_entry().max(1.0);
                    assert!(
                        (h.get(i, j) - fd).abs() <= 1e-4 * scale,
                        "H[{i}][{j}] = {} vs fd {fd}",
                        h.get(i, j)
                    );
                }
            }
        }
    }

    #[test]
    fn zero_sigma_oracle_is_exact() {
        let obj = quad_diag(&[1.0, 2.0]);
        let oracle = StochasticOracle::new(obj.clone(), NoiseKind::AdditiveGaussian, 0.0).unwrap();
        let x = ParamVector::from_vec(vec![1.0, 1.0]);
        let mut rng = SeededRng::new(0, 0);
        let g = oracle.sample_gradient(&x, &mut rng).unwrap();
        assert_eq!(g, obj.gradient(&x).unwrap());
    }

    #[test]
    fn additive_gaussian_noise_moments() {
        // Monte-Carlo oracle for unbiasedness and total noise variance.
        let d = 10;
        let obj = Objective::double_well(d, 2.0).unwrap();
        let oracle = StochasticOracle::new(obj.clone(), NoiseKind::AdditiveGaussian, 1.0).unwrap();
        let x = ParamVector::zeros(d);
        let trials = 100_000u64;
        let mut mean = ParamVector::zeros(d);
        let mut sq = 0.0;
        for t in 0..trials {
            let mut rng = SeededRng::new(3, stream_id(&[purpose::TRIAL, t]));
            let g = oracle.sample_gradient(&x, &mut rng).unwrap();
            mean = mean.add(&g);
            sq += g.norm_sq(); // grad f(0) = 0, so g is pure noise
        }
        let n = trials as f64;
        mean = mean.scale(1.0 / n);
        // per-coordinate noise std is sigma/sqrt(d); 3 sigma-hat band on the mean
        let band = 3.0 / (d as f64).sqrt() / n.sqrt();
        for i in 0..d {
            assert!(mean[i].abs() <= band, "mean[{i}] = {}", mean[i]);
        }
        let mean_sq = sq / n;
        assert!((mean_sq - 1.0).abs() < 0.02, "E||noise||^2 = {mean_sq}");
    }

    #[test]
    fn coordinate_sampling_enumeration() {
        // d = 2, grad = [2, -1]: outputs are [4, 0] or [0, -2], each w.p. 1/2.
        let obj = quad_diag(&[1.0, 1.0]);
        let oracle = StochasticOracle::new(obj, NoiseKind::CoordinateSampling, 1.0).unwrap();
        let x = ParamVector::from_vec(vec![2.0, -1.0]);
        let mut counts = [0usize; 2];
        let trials = 10_000u64;
        for t in 0..trials {
            let mut rng = SeededRng::new(5, stream_id(&[purpose::TRIAL, t]));
            let g = oracle.sample_gradient(&x, &mut rng).unwrap();
            if g.as_slice() == [4.0, 0.0] {
                counts[0] += 1;
            } else if g.as_slice() == [0.0, -2.0] {
                counts[1] += 1;
            } else {
                panic!("unexpected sample {:?}", g.as_slice());
            }
        }
        for c in counts {
            let freq = c as f64 / trials as f64;
            assert!((freq - 0.5).abs() < 0.02, "freq {freq}");
        }
    }

    #[test]
    fn ell_tilde_scaling() {
        let obj = Objective::double_well(10, 2.0).unwrap();
        let add = StochasticOracle::new(obj.clone(), NoiseKind::AdditiveGaussian, 0.5).unwrap();
        let coord = StochasticOracle::new(obj.clone(), NoiseKind::CoordinateSampling, 0.5).unwrap();
        assert_eq!(add.ell_tilde(), obj.l);
        assert_eq!(coord.ell_tilde(), 10.0 * obj.l);
        assert!(add.lipschitz_sg());
        assert!(!coord.lipschitz_sg());
    }
}
