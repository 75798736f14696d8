//! Stationarity certification, saddle-escape experiments, coupling
//! diagnostics, and empirical checks of the descent/error bounds.

mod coupling;
mod lemmas;
pub mod stats;

pub use coupling::{
    coupling_experiment, run_coupled_pair, CouplingDiagnostics, CouplingExperimentConfig,
    PairSummary,
};
pub use lemmas::{
    descent_lemma_check, descent_lemma_check_averaged, error_bound_check,
    improve_or_localize_check, AveragedDescentCheck, DescentCheck, ErrorBoundCheck, IolReport,
    WindowSlack,
};

use serde::Serialize;

use crate::compressors::CompressorSpec;
use crate::error::{Error, Result};
use crate::linalg::{min_eigenpair, purpose, stream_id, ParamVector};
use crate::objectives::{Objective, StochasticOracle};
use crate::optimizer::{maybe_reset, step, HyperParams, OptimizerState};
use crate::parallel;

/// First- and second-order stationarity certificate at a point.
#[derive(Debug, Clone, Serialize)]
pub struct StationarityReport {
    pub grad_norm: f64,
    pub lambda_min: f64,
    pub is_fosp: bool,
    pub is_sosp: bool,
    pub epsilon: f64,
}

/// Evaluate the analytic gradient and Hessian at `x` and certify
/// eps-stationarity: FOSP means ||grad f|| <= eps, SOSP additionally needs
/// lambda_min(hessian) >= -sqrt(rho * eps).
pub fn certify(
    obj: &Objective,
    x: &ParamVector,
    epsilon: f64,
    hp: &HyperParams,
) -> Result<StationarityReport> {
    let grad_norm = obj.gradient(x)?.norm();
    let hess = obj.hessian(x)?;
    let (lambda_min, _) = min_eigenpair(&hess, hp.l, 1e-8 * hp.l, 200_000)?;
    let is_fosp = grad_norm <= epsilon;
    let is_sosp = is_fosp && lambda_min >= -(hp.rho * epsilon).sqrt();
    Ok(StationarityReport {
        grad_norm,
        lambda_min,
        is_fosp,
        is_sosp,
        epsilon,
    })
}

/// Fraction of checkpoints certified as eps-SOSP.
pub fn sosp_fraction(
    checkpoints: &[ParamVector],
    obj: &Objective,
    epsilon: f64,
    hp: &HyperParams,
) -> Result<(f64, Vec<StationarityReport>)> {
    if checkpoints.is_empty() {
        return Err(Error::parameter("sosp_fraction: empty checkpoint list"));
    }
    let reports = parallel::map_indexed(checkpoints.len(), |i| {
        certify(obj, &checkpoints[i], epsilon, hp)
    });
    let reports: Vec<StationarityReport> = reports.into_iter().collect::<Result<_>>()?;
    let hits = reports.iter().filter(|r| r.is_sosp).count();
    Ok((hits as f64 / reports.len() as f64, reports))
}

/// Reflect `xi` across the hyperplane orthogonal to the unit vector `v1`:
/// xi - 2 <v1, xi> v1. Involutive and norm-preserving up to rounding.
pub fn reflect_along(xi: &ParamVector, v1: &ParamVector) -> ParamVector {
    xi.add_scaled(-2.0 * v1.dot(xi), v1)
}

/// ln of beta_t^2 = sum_{i=0}^{t-1} (1 + eta_gamma)^{2i}, computed in log
/// space so it stays finite for t in the tens of thousands.
pub fn ln_beta_sq(t: u64, eta_gamma: f64) -> f64 {
    assert!(eta_gamma > 0.0, "beta series needs eta*gamma > 0");
    if t == 0 {
        return f64::NEG_INFINITY;
    }
    let ln_q = eta_gamma.ln_1p();
    let a = 2.0 * t as f64 * ln_q;
    // ln((q^{2t} - 1) / (q^2 - 1)) = a + ln(1 - e^{-a}) - ln(eta_gamma (2 + eta_gamma))
    a + (-(-a).exp_m1()).ln() - (eta_gamma * (2.0 + eta_gamma)).ln()
}

/// Both directions of the beta_t envelope:
/// beta_t <= (1+eta_gamma)^t / sqrt(2 eta_gamma) for all t, and
/// beta_t >= (1+eta_gamma)^t / sqrt(6 eta_gamma) for t >= 2/(eta_gamma).
pub fn beta_bounds_hold(t: u64, eta_gamma: f64) -> bool {
    if t == 0 {
        return true;
    }
    let ln_beta = 0.5 * ln_beta_sq(t, eta_gamma);
    let ln_growth = t as f64 * eta_gamma.ln_1p();
    let upper_ok = ln_beta <= ln_growth - 0.5 * (2.0 * eta_gamma).ln();
    let lower_ok = if t as f64 >= 2.0 / eta_gamma {
        ln_beta >= ln_growth - 0.5 * (6.0 * eta_gamma).ln()
    } else {
        true
    };
    upper_ok && lower_ok
}

#[derive(Debug, Clone, Copy, Serialize)]
pub struct EscapeOutcome {
    pub escaped: bool,
    pub t_escape: Option<u64>,
}

#[derive(Debug, Clone, Serialize)]
pub struct EscapeReport {
    pub success_rate: f64,
    pub f0: f64,
    pub threshold: f64,
    pub budget: u64,
    pub outcomes: Vec<EscapeOutcome>,
}

/// Run `n_seeds` independent runs from `x0` and report how often the
/// objective drops below f(x0) - F within the escape budget I.
pub fn escape_experiment(
    oracle: &StochasticOracle,
    spec: &CompressorSpec,
    hp: &HyperParams,
    reset_error: bool,
    x0: &ParamVector,
    base_seed: u64,
    n_seeds: usize,
) -> Result<EscapeReport> {
    let obj = oracle.objective();
    let f0 = obj.value(x0)?;
    let threshold = f0 - hp.escape_decrease;
    let budget = if hp.escape_iters_int() > 0 {
        hp.escape_iters_int().min(hp.iters.max(1))
    } else {
        hp.iters
    };
    let outcomes = parallel::map_indexed(n_seeds, |s| -> Result<EscapeOutcome> {
        let seed = stream_id(&[purpose::SWEEP, base_seed, s as u64]);
        let mut state = OptimizerState::new(x0.clone(), seed);
        for _ in 0..budget {
            maybe_reset(&mut state, hp, reset_error);
            step(&mut state, oracle, spec, hp, 64)?;
            if obj.value(&state.x)? < threshold {
                return Ok(EscapeOutcome {
                    escaped: true,
                    t_escape: Some(state.t),
                });
            }
        }
        Ok(EscapeOutcome {
            escaped: false,
            t_escape: None,
        })
    });
    let outcomes: Vec<EscapeOutcome> = outcomes.into_iter().collect::<Result<_>>()?;
    let hits = outcomes.iter().filter(|o| o.escaped).count();
    Ok(EscapeReport {
        success_rate: hits as f64 / n_seeds as f64,
        f0,
        threshold,
        budget,
        outcomes,
    })
}

#[cfg(test)]
mod tests;
