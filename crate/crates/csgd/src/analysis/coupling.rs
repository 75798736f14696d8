//! Coupled trajectory pairs for the saddle-escape mechanism.
//!
//! Two runs share every random draw except the artificial noise, whose
//! component along the most negative Hessian eigenvector v1 is reflected:
//! xi' = xi - 2 <v1, xi> v1. Both sequences have the same marginal
//! distribution, while their difference grows like (1 + eta*gamma)^t along
//! v1, which is what forces at least one of them away from the saddle.

use serde::Serialize;

use crate::compressors::{compress_with, CompressorSpec};
use crate::error::{Error, Result};
use crate::linalg::{min_eigenpair, purpose, stream_id, ParamVector};
use crate::objectives::StochasticOracle;
use crate::optimizer::{draw_xi, form_update_input, theta_rng, theta_tilde_rng, HyperParams};
use crate::parallel;

use super::stats;

/// Per-seed scalar series of one coupled pair.
#[derive(Debug, Clone)]
pub struct PairSummary {
    /// <v1, y'_t - y_t> for t = 0..=T
    pub proj: Vec<f64>,
    pub y_hat_norm: Vec<f64>,
    pub x_hat_norm: Vec<f64>,
    pub f_x: Vec<f64>,
    pub f_x_prime: Vec<f64>,
    pub escaped: bool,
    pub escaped_prime: bool,
    /// Worst relative gap between y' - y and x_hat - eta e_hat (the two ways
    /// of computing the coupled difference).
    pub max_bookkeeping_rel: f64,
}

/// Run one coupled pair from the saddle `x0` for `t_max` iterations.
#[allow(clippy::too_many_arguments)]
pub fn run_coupled_pair(
    oracle: &StochasticOracle,
    spec: &CompressorSpec,
    hp: &HyperParams,
    x0: &ParamVector,
    v1: &ParamVector,
    seed: u64,
    t_max: u64,
    value_bits: u32,
) -> Result<PairSummary> {
    let obj = oracle.objective();
    let d = obj.dim();
    let mut x = x0.clone();
    let mut xp = x0.clone();
    let mut e = ParamVector::zeros(d);
    let mut ep = ParamVector::zeros(d);
    let y0 = x0.clone();

    let len = t_max as usize + 1;
    let mut out = PairSummary {
        proj: Vec::with_capacity(len),
        y_hat_norm: Vec::with_capacity(len),
        x_hat_norm: Vec::with_capacity(len),
        f_x: Vec::with_capacity(len),
        f_x_prime: Vec::with_capacity(len),
        escaped: false,
        escaped_prime: false,
        max_bookkeeping_rel: 0.0,
    };

    let record = |x: &ParamVector,
                  xp: &ParamVector,
                  e: &ParamVector,
                  ep: &ParamVector,
                  out: &mut PairSummary|
     -> Result<()> {
        let y = x.add_scaled(-hp.eta, e);
        let yp = xp.add_scaled(-hp.eta, ep);
        let y_hat = yp.sub(&y);
        let x_hat = xp.sub(x);
        let e_hat = ep.sub(e);
        let alt = x_hat.add_scaled(-hp.eta, &e_hat);
        let rel = y_hat.sub(&alt).norm() / (1.0 + y_hat.norm());
        out.max_bookkeeping_rel = out.max_bookkeeping_rel.max(rel);
        out.proj.push(v1.dot(&y_hat));
        out.y_hat_norm.push(y_hat.norm());
        out.x_hat_norm.push(x_hat.norm());
        out.f_x.push(obj.value(x)?);
        out.f_x_prime.push(obj.value(xp)?);
        if y.sub(&y0).norm() > hp.escape_radius {
            out.escaped = true;
        }
        if yp.sub(&y0).norm() > hp.escape_radius {
            out.escaped_prime = true;
        }
        Ok(())
    };

    record(&x, &xp, &e, &ep, &mut out)?;
    for t in 0..t_max {
        let xi = draw_xi(seed, t, hp)?;
        let xi_p = super::reflect_along(&xi, v1);
        // Shared stochastic randomness theta_t: two generators on the same
        // stream produce the identical draw for both sequences.
        let grad = oracle.sample_gradient(&x, &mut theta_rng(seed, t, 0))?;
        let grad_p = oracle.sample_gradient(&xp, &mut theta_rng(seed, t, 0))?;
        let shared_draw = spec.draw(&mut theta_tilde_rng(seed, t));

        let u = form_update_input(&e, &grad, &xi);
        let up = form_update_input(&ep, &grad_p, &xi_p);
        let (g, _) = compress_with(spec, &u, &shared_draw, value_bits)?;
        let (gp, _) = compress_with(spec, &up, &shared_draw, value_bits)?;
        x = x.add_scaled(-hp.eta, &g);
        xp = xp.add_scaled(-hp.eta, &gp);
        e = u.sub(&g);
        ep = up.sub(&gp);
        if !x.is_finite() || !xp.is_finite() {
            return Err(Error::NonFinite {
                t,
                context: "coupled pair".into(),
            });
        }
        record(&x, &xp, &e, &ep, &mut out)?;
    }
    Ok(out)
}

#[derive(Debug, Clone, Copy)]
pub struct CouplingExperimentConfig {
    pub seeds: usize,
    pub base_seed: u64,
    /// Pair length; defaults to the escape budget I when absent.
    pub t_max: Option<u64>,
    pub value_bits: u32,
}

/// Seed-aggregated diagnostics of the coupling experiment.
#[derive(Debug, Clone, Serialize)]
pub struct CouplingDiagnostics {
    pub gamma: f64,
    pub eta_gamma: f64,
    pub v1: ParamVector,
    pub t_max: u64,
    pub seeds: usize,
    pub mean_abs_proj: Vec<f64>,
    pub rms_proj: Vec<f64>,
    pub mean_y_hat_norm: Vec<f64>,
    pub mean_f: Vec<f64>,
    pub mean_f_prime: Vec<f64>,
    pub var_f: Vec<f64>,
    pub var_f_prime: Vec<f64>,
    /// |mean(f - f')| / se(f - f') per iteration (paired moment test).
    pub mean_diff_over_se: Vec<f64>,
    /// |var(f) - var(f')| / se of the paired squared-deviation difference.
    pub var_diff_over_se: Vec<f64>,
    pub f_end: Vec<f64>,
    pub f_end_prime: Vec<f64>,
    pub escape_rate: f64,
    pub escape_rate_prime: f64,
    pub max_bookkeeping_rel: f64,
}

/// Run the coupling experiment from a verified strict saddle. Fails the
/// precondition when lambda_min(hessian(x0)) >= -sqrt(rho eps)/2.
pub fn coupling_experiment(
    oracle: &StochasticOracle,
    spec: &CompressorSpec,
    hp: &HyperParams,
    x0: &ParamVector,
    cfg: &CouplingExperimentConfig,
) -> Result<CouplingDiagnostics> {
    let obj = oracle.objective();
    let hess = obj.hessian(x0)?;
    let (lambda_min, v1) = min_eigenpair(&hess, hp.l, 1e-10 * hp.l.max(1.0), 200_000)?;
    let threshold = -(hp.rho * hp.epsilon).sqrt() / 2.0;
    if lambda_min >= threshold {
        return Err(Error::precondition(format!(
            "x0 is not a usable saddle: lambda_min = {lambda_min}, needs < {threshold}"
        )));
    }
    let gamma = -lambda_min;
    let t_max = match cfg.t_max {
        Some(t) => t,
        None => {
            let i = hp.escape_iters_int();
            if i == 0 {
                return Err(Error::parameter(
                    "coupling experiment needs a finite escape budget or explicit t_max",
                ));
            }
            i
        }
    };

    let pairs = parallel::map_indexed(cfg.seeds, |s| {
        let seed = stream_id(&[purpose::SWEEP, cfg.base_seed, s as u64]);
        run_coupled_pair(oracle, spec, hp, x0, &v1, seed, t_max, cfg.value_bits)
    });
    let pairs: Vec<PairSummary> = pairs.into_iter().collect::<Result<_>>()?;

    let len = t_max as usize + 1;
    let n = pairs.len();
    let mut diag = CouplingDiagnostics {
        gamma,
        eta_gamma: hp.eta * gamma,
        v1,
        t_max,
        seeds: n,
        mean_abs_proj: Vec::with_capacity(len),
        rms_proj: Vec::with_capacity(len),
        mean_y_hat_norm: Vec::with_capacity(len),
        mean_f: Vec::with_capacity(len),
        mean_f_prime: Vec::with_capacity(len),
        var_f: Vec::with_capacity(len),
        var_f_prime: Vec::with_capacity(len),
        mean_diff_over_se: Vec::with_capacity(len),
        var_diff_over_se: Vec::with_capacity(len),
        f_end: pairs.iter().map(|p| *p.f_x.last().unwrap()).collect(),
        f_end_prime: pairs.iter().map(|p| *p.f_x_prime.last().unwrap()).collect(),
        escape_rate: pairs.iter().filter(|p| p.escaped).count() as f64 / n as f64,
        escape_rate_prime: pairs.iter().filter(|p| p.escaped_prime).count() as f64 / n as f64,
        max_bookkeeping_rel: pairs
            .iter()
            .fold(0.0f64, |m, p| m.max(p.max_bookkeeping_rel)),
    };

    for t in 0..len {
        let proj: Vec<f64> = pairs.iter().map(|p| p.proj[t]).collect();
        let yh: Vec<f64> = pairs.iter().map(|p| p.y_hat_norm[t]).collect();
        let f: Vec<f64> = pairs.iter().map(|p| p.f_x[t]).collect();
        let fp: Vec<f64> = pairs.iter().map(|p| p.f_x_prime[t]).collect();
        diag.mean_abs_proj
            .push(proj.iter().map(|v| v.abs()).sum::<f64>() / n as f64);
        diag.rms_proj
            .push((proj.iter().map(|v| v * v).sum::<f64>() / n as f64).sqrt());
        diag.mean_y_hat_norm.push(stats::mean(&yh));
        let (mf, mfp) = (stats::mean(&f), stats::mean(&fp));
        diag.mean_f.push(mf);
        diag.mean_f_prime.push(mfp);
        diag.var_f.push(stats::sample_var(&f));
        diag.var_f_prime.push(stats::sample_var(&fp));

        let diffs: Vec<f64> = f.iter().zip(&fp).map(|(a, b)| a - b).collect();
        let se = stats::std_err(&diffs);
        let md = stats::mean(&diffs).abs();
        diag.mean_diff_over_se.push(if se > 0.0 {
            md / se
        } else if md == 0.0 {
            0.0
        } else {
            f64::INFINITY
        });

        let sq_dev_diffs: Vec<f64> = f
            .iter()
            .zip(&fp)
            .map(|(a, b)| (a - mf) * (a - mf) - (b - mfp) * (b - mfp))
            .collect();
        let se_v = stats::std_err(&sq_dev_diffs);
        let mv = stats::mean(&sq_dev_diffs).abs();
        diag.var_diff_over_se.push(if se_v > 0.0 {
            mv / se_v
        } else if mv == 0.0 {
            0.0
        } else {
            f64::INFINITY
        });
    }
    Ok(diag)
}

impl CouplingDiagnostics {
    /// Fitted exponential growth rate of the coupled-difference projection
    /// over the window from the start of the exponential regime
    /// (t >= 2/(eta gamma)) to the first crossing of the escape radius by
    /// the mean ||y_hat||. Returns (slope, window_start, window_end).
    pub fn fit_growth_rate(&self, escape_radius: f64) -> Result<(f64, u64, u64)> {
        let t0 = (2.0 / self.eta_gamma).ceil() as usize;
        let t1 = self
            .mean_y_hat_norm
            .iter()
            .position(|&v| v > escape_radius)
            .unwrap_or(self.mean_y_hat_norm.len());
        if t1 <= t0 + 8 {
            return Err(Error::parameter(format!(
                "growth window [{t0}, {t1}) too short for a fit"
            )));
        }
        let ts: Vec<f64> = (t0..t1).map(|t| t as f64).collect();
        let ys: Vec<f64> = self.rms_proj[t0..t1].to_vec();
        Ok((stats::fit_log_slope(&ts, &ys), t0 as u64, t1 as u64))
    }

    /// Two-sample KS test on the end-of-window objective values of the two
    /// coupled sequences.
    pub fn ks_end_values(&self) -> (f64, f64) {
        stats::ks_two_sample(&self.f_end, &self.f_end_prime)
    }

    /// CSV with one row per iteration of the aggregated series.
    pub fn csv_string(&self) -> String {
        use crate::trace::fmt_f64;
        let mut s = String::from(
            "t,mean_abs_proj,rms_proj,mean_y_hat_norm,mean_f,mean_f_prime,var_f,var_f_prime\n",
        );
        for t in 0..self.mean_abs_proj.len() {
            s.push_str(&format!(
                "{},{},{},{},{},{},{},{}\n",
                t,
                fmt_f64(self.mean_abs_proj[t]),
                fmt_f64(self.rms_proj[t]),
                fmt_f64(self.mean_y_hat_norm[t]),
                fmt_f64(self.mean_f[t]),
                fmt_f64(self.mean_f_prime[t]),
                fmt_f64(self.var_f[t]),
                fmt_f64(self.var_f_prime[t]),
            ));
        }
        s
    }
}
