//! Single-process perturbed compressed SGD with error feedback, and the
//! hyperparameter planner.
//!
//! One iteration, starting from `(x_t, e_t)`:
//!   1. optionally reset the error: if the reset flag is on and either more
//!      than I iterations passed since the last reset or the corrected
//!      iterate drifted more than R from the last reset point, absorb the
//!      error into x and zero it;
//!   2. sample artificial noise xi_t and a stochastic gradient;
//!   3. compress u = e_t + grad F(x_t, theta_t) + xi_t;
//!   4. step x_{t+1} = x_t - eta g_t and carry e_{t+1} = u - g_t.
//!
//! The corrected iterate y_t = x_t - eta e_t satisfies
//! y_{t+1} - y_t = -eta (grad F(x_t, theta_t) + xi_t) identically; the run
//! monitors that identity at every iteration.

use serde::Serialize;

use crate::compressors::{compress_with, CompressorSpec};
use crate::error::{Error, Result};
use crate::linalg::{gaussian_vector, purpose, stream_id, ParamVector, SeededRng};
use crate::objectives::StochasticOracle;
use crate::trace::{Checkpoint, IterRecord, RunTrace};

/// Scale-free constants of the parameter plan. `c_i = None` selects the
/// default 4 ln(d T), resolved once T is known.
#[derive(Debug, Clone, Copy, Serialize)]
pub struct PlanConstants {
    pub c_eta: f64,
    pub c_i: Option<f64>,
    pub c_rad: f64,
    pub c_f: f64,
    pub c_r: f64,
    pub c_t: f64,
}

impl Default for PlanConstants {
    fn default() -> Self {
        PlanConstants {
            c_eta: 0.25,
            c_i: None,
            c_rad: 0.5,
            c_f: 0.05,
            c_r: 1.0,
            c_t: 1.0,
        }
    }
}

/// Problem constants the planner consumes.
#[derive(Debug, Clone, Copy)]
pub struct PlanInputs {
    pub epsilon: f64,
    pub l: f64,
    /// Hessian-Lipschitz upper bound; must be positive (any upper bound is
    /// valid, so exactly-quadratic objectives pass a small positive value).
    pub rho: f64,
    pub sigma: f64,
    /// Lipschitz constant of the stochastic gradient; +inf when unavailable.
    pub ell_tilde: f64,
    pub f_max: f64,
    pub d: usize,
    pub lipschitz_sg: bool,
    /// Hard cap on the planned iteration count.
    pub t_cap: Option<u64>,
}

/// The full hyperparameter tuple of one run.
#[derive(Debug, Clone, Serialize)]
pub struct HyperParams {
    pub epsilon: f64,
    pub l: f64,
    pub rho: f64,
    pub sigma: f64,
    pub d: usize,
    /// 1 with a Lipschitz stochastic gradient, d otherwise.
    pub alpha: f64,
    pub mu: f64,
    pub linear_compressor: bool,
    /// Step size eta.
    pub eta: f64,
    /// Escape iteration budget I (kept real-valued; the identity
    /// I * eta * sqrt(rho eps) = c_i holds exactly).
    pub escape_iters: f64,
    /// Escape radius R.
    pub escape_radius: f64,
    /// Guaranteed objective decrease F per escape episode.
    pub escape_decrease: f64,
    /// Artificial noise total standard deviation r; per-coordinate variance
    /// is r^2/d so that E||xi||^2 = r^2.
    pub noise_std: f64,
    /// chi^2 = sigma^2 + r^2.
    pub chi_sq: f64,
    /// Iteration budget T.
    pub iters: u64,
    pub constants: ResolvedConstants,
}

#[derive(Debug, Clone, Copy, Serialize)]
pub struct ResolvedConstants {
    pub c_eta: f64,
    pub c_i: f64,
    pub c_rad: f64,
    pub c_f: f64,
    pub c_r: f64,
    pub c_t: f64,
}

/// Step-size ceiling of the compressed descent lemma:
/// (1/4L) min(mu / sqrt(1 - mu), 1).
pub fn descent_step_cap(l: f64, mu: f64) -> f64 {
    let ratio = if mu >= 1.0 {
        1.0
    } else {
        (mu / (1.0 - mu).sqrt()).min(1.0)
    };
    ratio / (4.0 * l)
}

/// RandomK sizing k = ceil(d eps^{3/4} / sqrt(alpha)), clamped to [1, d].
pub fn suggested_random_k(d: usize, epsilon: f64, alpha: f64) -> usize {
    let k = (d as f64 * epsilon.powf(0.75) / alpha.sqrt()).ceil() as usize;
    k.clamp(1, d)
}

/// Maximal stable step size of plain SGD:
/// eps^2/(L(1+d sigma^2)) + min(eps^2/(L(1+sigma^2)), sqrt(rho eps)/ell^2).
pub fn eta_sigma(inputs: &PlanInputs) -> f64 {
    let e2 = inputs.epsilon * inputs.epsilon;
    let l = inputs.l;
    let s2 = inputs.sigma * inputs.sigma;
    let first = e2 / (l * (1.0 + inputs.d as f64 * s2));
    let curvature_term = if inputs.ell_tilde.is_finite() {
        (inputs.rho * inputs.epsilon).sqrt() / (inputs.ell_tilde * inputs.ell_tilde)
    } else {
        0.0
    };
    first + (e2 / (l * (1.0 + s2))).min(curvature_term)
}

/// Maximal step size tolerated by the compressor, general and linear forms.
pub fn eta_mu(inputs: &PlanInputs, mu: f64, linear: bool) -> f64 {
    if mu >= 1.0 {
        return f64::INFINITY;
    }
    let l = inputs.l;
    let first = if inputs.sigma > 0.0 {
        mu * inputs.epsilon / ((1.0 - mu).sqrt() * l * inputs.sigma)
    } else {
        f64::INFINITY
    };
    let second = if linear {
        mu * mu * (inputs.rho * inputs.epsilon).sqrt() / ((1.0 - mu) * l * l)
    } else {
        mu * mu * inputs.epsilon.sqrt() / ((1.0 - mu) * l * l * inputs.d as f64)
    };
    first.min(second)
}

/// Compute the full hyperparameter tuple from problem constants and the
/// compressor. Rejects Quantization, which has no compression factor.
pub fn plan(
    inputs: &PlanInputs,
    spec: &CompressorSpec,
    constants: &PlanConstants,
) -> Result<HyperParams> {
    if !(inputs.epsilon > 0.0 && inputs.epsilon <= 1.0) {
        return Err(Error::parameter(format!(
            "epsilon must lie in (0, 1], got {}",
            inputs.epsilon
        )));
    }
    if !(inputs.l > 0.0) || !(inputs.rho > 0.0) || !(inputs.f_max > 0.0) {
        return Err(Error::parameter(
            "planner requires positive L, rho and f_max",
        ));
    }
    if inputs.sigma < 0.0 {
        return Err(Error::parameter("sigma must be nonnegative"));
    }
    for (name, v) in [
        ("c_eta", constants.c_eta),
        ("c_rad", constants.c_rad),
        ("c_f", constants.c_f),
        ("c_r", constants.c_r),
        ("c_t", constants.c_t),
    ] {
        if !(v > 0.0) {
            return Err(Error::parameter(format!(
                "constant {name} must be positive"
            )));
        }
    }
    let mu = spec.mu().ok_or_else(|| {
        Error::parameter(
            "Quantization is not a mu-compressor; the planner cannot size a run for it",
        )
    })?;
    let linear = spec.is_linear();

    let e_sigma = eta_sigma(inputs);
    let e_mu = eta_mu(inputs, mu, linear);
    let mut eta = constants.c_eta * e_sigma.min(e_mu);
    eta = eta.min(descent_step_cap(inputs.l, mu));
    if !(eta > 0.0) {
        return Err(Error::parameter(format!(
            "planned step size is degenerate ({eta}); check the problem constants"
        )));
    }

    let r = constants.c_r * inputs.epsilon / (inputs.l * eta).sqrt();
    let chi_sq = inputs.sigma * inputs.sigma + r * r;

    let t_raw = constants.c_t * inputs.f_max / (inputs.epsilon * inputs.epsilon * eta);
    let mut iters = t_raw.ceil() as u64;
    if let Some(cap) = inputs.t_cap {
        iters = iters.min(cap);
    }
    let c_i = match constants.c_i {
        Some(v) if v > 0.0 => v,
        Some(v) => {
            return Err(Error::parameter(format!(
                "constant c_i must be positive, got {v}"
            )))
        }
        None => 4.0 * ((inputs.d as f64) * iters as f64).ln().max(1.0),
    };
    let sqrt_rho_eps = (inputs.rho * inputs.epsilon).sqrt();

    Ok(HyperParams {
        epsilon: inputs.epsilon,
        l: inputs.l,
        rho: inputs.rho,
        sigma: inputs.sigma,
        d: inputs.d,
        alpha: if inputs.lipschitz_sg {
            1.0
        } else {
            inputs.d as f64
        },
        mu,
        linear_compressor: linear,
        eta,
        escape_iters: c_i / (eta * sqrt_rho_eps),
        escape_radius: constants.c_rad * (inputs.epsilon / inputs.rho).sqrt(),
        escape_decrease: constants.c_f * (inputs.epsilon.powi(3) / inputs.rho).sqrt(),
        noise_std: r,
        chi_sq,
        iters,
        constants: ResolvedConstants {
            c_eta: constants.c_eta,
            c_i,
            c_rad: constants.c_rad,
            c_f: constants.c_f,
            c_r: constants.c_r,
            c_t: constants.c_t,
        },
    })
}

/// Hyperparameters specified by hand instead of planned; defaults leave the
/// reset branch disarmed (infinite escape budget and radius).
#[derive(Debug, Clone, Copy)]
pub struct ManualParams {
    pub epsilon: f64,
    pub l: f64,
    pub rho: f64,
    pub sigma: f64,
    pub eta: f64,
    pub noise_std: f64,
    pub iters: u64,
    pub escape_iters: f64,
    pub escape_radius: f64,
    pub escape_decrease: f64,
}

impl Default for ManualParams {
    fn default() -> Self {
        ManualParams {
            epsilon: 0.1,
            l: 1.0,
            rho: 1.0,
            sigma: 0.0,
            eta: 0.01,
            noise_std: 0.0,
            iters: 0,
            escape_iters: f64::INFINITY,
            escape_radius: f64::INFINITY,
            escape_decrease: 0.0,
        }
    }
}

impl HyperParams {
    /// Hand-built hyperparameters for diagnostics that do not go through the
    /// planner (e.g. runs with the artificial noise switched off).
    pub fn manual(spec: &CompressorSpec, params: ManualParams) -> Self {
        let p = params;
        HyperParams {
            epsilon: p.epsilon,
            l: p.l,
            rho: p.rho,
            sigma: p.sigma,
            d: spec.d,
            alpha: 1.0,
            mu: spec.mu().unwrap_or(f64::NAN),
            linear_compressor: spec.is_linear(),
            eta: p.eta,
            escape_iters: p.escape_iters,
            escape_radius: p.escape_radius,
            escape_decrease: p.escape_decrease,
            noise_std: p.noise_std,
            chi_sq: p.sigma * p.sigma + p.noise_std * p.noise_std,
            iters: p.iters,
            constants: ResolvedConstants {
                c_eta: f64::NAN,
                c_i: f64::NAN,
                c_rad: f64::NAN,
                c_f: f64::NAN,
                c_r: f64::NAN,
                c_t: f64::NAN,
            },
        }
    }

    /// Iteration form of the escape budget; 0 means "never" (infinite I).
    pub fn escape_iters_int(&self) -> u64 {
        if self.escape_iters.is_finite() {
            (self.escape_iters.ceil() as u64).max(1)
        } else {
            0
        }
    }
}

/// Mutable state of one optimizer run.
#[derive(Debug, Clone)]
pub struct OptimizerState {
    pub t: u64,
    pub x: ParamVector,
    pub e: ParamVector,
    /// Iteration of the last reset.
    pub t_prime: u64,
    /// x at the last reset (the anchor of the distance test).
    pub x_anchor: ParamVector,
    pub seed: u64,
    /// Stream address component for the stochastic-gradient draws.
    pub worker: u64,
}

impl OptimizerState {
    pub fn new(x0: ParamVector, seed: u64) -> Self {
        let d = x0.dim();
        OptimizerState {
            t: 0,
            x: x0.clone(),
            e: ParamVector::zeros(d),
            t_prime: 0,
            x_anchor: x0,
            seed,
            worker: 0,
        }
    }
}

/// y = x - eta e.
pub fn corrected_iterate(state: &OptimizerState, hp: &HyperParams) -> ParamVector {
    state.x.add_scaled(-hp.eta, &state.e)
}

/// Reset branch: fires when more than I iterations passed since the last
/// reset, or the corrected iterate moved more than R from the anchor.
/// On reset, x absorbs eta*e (so y is unchanged) and e zeroes.
pub fn maybe_reset(state: &mut OptimizerState, hp: &HyperParams, reset_error: bool) -> bool {
    if !reset_error {
        return false;
    }
    let y = corrected_iterate(state, hp);
    let elapsed = (state.t - state.t_prime) as f64;
    let drift = state.x_anchor.sub(&y).norm();
    if elapsed > hp.escape_iters || drift > hp.escape_radius {
        state.x = y;
        state.e = ParamVector::zeros(state.x.dim());
        state.t_prime = state.t;
        state.x_anchor = state.x.clone();
        true
    } else {
        false
    }
}

/// u = e + grad + xi, in this fixed association order (the distributed
/// simulator reuses it so a one-worker cluster run is bitwise identical).
pub(crate) fn form_update_input(
    e: &ParamVector,
    grad: &ParamVector,
    xi: &ParamVector,
) -> ParamVector {
    e.add(grad).add(xi)
}

pub(crate) fn draw_xi(seed: u64, t: u64, hp: &HyperParams) -> Result<ParamVector> {
    let mut rng = SeededRng::new(seed, stream_id(&[purpose::XI, t]));
    let per_coord = hp.noise_std / (hp.d as f64).sqrt();
    gaussian_vector(&mut rng, hp.d, per_coord)
}

pub(crate) fn theta_rng(seed: u64, t: u64, worker: u64) -> SeededRng {
    SeededRng::new(seed, stream_id(&[purpose::THETA, t, worker]))
}

pub(crate) fn theta_tilde_rng(seed: u64, t: u64) -> SeededRng {
    SeededRng::new(seed, stream_id(&[purpose::THETA_TILDE, t]))
}

/// Outcome of one step, for the trace.
#[derive(Debug, Clone, Copy)]
pub struct StepOutcome {
    pub bits: u64,
    pub y_identity_rel_err: f64,
}

/// One iteration of the update (without the reset branch; call
/// [`maybe_reset`] first).
pub fn step(
    state: &mut OptimizerState,
    oracle: &StochasticOracle,
    spec: &CompressorSpec,
    hp: &HyperParams,
    value_bits: u32,
) -> Result<StepOutcome> {
    let t = state.t;
    let xi = draw_xi(state.seed, t, hp)?;
    let grad = oracle.sample_gradient(&state.x, &mut theta_rng(state.seed, t, state.worker))?;
    let u = form_update_input(&state.e, &grad, &xi);
    let draw = spec.draw(&mut theta_tilde_rng(state.seed, t));
    let (g, msg) = compress_with(spec, &u, &draw, value_bits)?;

    let y_before = state.x.add_scaled(-hp.eta, &state.e);
    let new_x = state.x.add_scaled(-hp.eta, &g);
    let new_e = u.sub(&g);
    let y_after = new_x.add_scaled(-hp.eta, &new_e);

    // Corrected-iterate identity: y_{t+1} - y_t + eta (grad F + xi) = 0.
    let v = u.sub(&state.e);
    let resid = y_after.sub(&y_before).add_scaled(hp.eta, &v).norm();
    let rel = resid / (1.0 + hp.eta * v.norm());

    if !new_x.is_finite() || !new_e.is_finite() {
        return Err(Error::NonFinite {
            t,
            context: "iterate or error accumulator".into(),
        });
    }
    state.x = new_x;
    state.e = new_e;
    state.t = t + 1;
    Ok(StepOutcome {
        bits: msg.cost_bits,
        y_identity_rel_err: rel,
    })
}

/// Knobs of a full run that are not part of the hyperparameter tuple.
#[derive(Debug, Clone, Copy)]
pub struct RunOptions {
    pub reset_error: bool,
    pub value_bits: u32,
    /// Keep a full record every `record_every` iterations (the first and
    /// last iterations are always recorded). Summary statistics cover every
    /// iteration regardless.
    pub record_every: u64,
}

impl Default for RunOptions {
    fn default() -> Self {
        RunOptions {
            reset_error: false,
            value_bits: 64,
            record_every: 1,
        }
    }
}

/// Execute T iterations of reset + step, producing the trace.
///
/// Checkpoints collect the candidate points of the stationarity theorems:
/// with `reset_error` on, the post-reset x at every reset event; with it
/// off, x at every multiple of I.
pub fn run(
    oracle: &StochasticOracle,
    spec: &CompressorSpec,
    hp: &HyperParams,
    opts: &RunOptions,
    x0: ParamVector,
    seed: u64,
) -> Result<RunTrace> {
    let obj = oracle.objective();
    if x0.dim() != obj.dim() {
        return Err(Error::DimensionMismatch {
            expected: obj.dim(),
            got: x0.dim(),
        });
    }
    obj.value(&x0)?; // domain check up front

    let mut state = OptimizerState::new(x0, seed);
    let y0 = corrected_iterate(&state, hp);
    let mut records: Vec<IterRecord> = Vec::new();
    let mut checkpoints = Vec::new();
    let mut total_bits = 0u64;
    let mut reset_count = 0u64;
    let mut max_rel = 0.0f64;
    let ckpt_interval = hp.escape_iters_int();
    let stride = opts.record_every.max(1);

    // Pre-step snapshot of the quantities a record carries.
    let snapshot = |state: &OptimizerState| -> Result<(f64, f64, f64, f64, f64)> {
        let y = corrected_iterate(state, hp);
        Ok((
            obj.value(&state.x)?,
            obj.gradient(&state.x)?.norm(),
            state.e.norm(),
            obj.value(&y)?,
            y.sub(&y0).norm(),
        ))
    };

    for t in 0..hp.iters {
        let did_reset = maybe_reset(&mut state, hp, opts.reset_error);
        if did_reset {
            reset_count += 1;
            checkpoints.push(Checkpoint {
                t,
                point: state.x.clone(),
            });
        }
        if !opts.reset_error && ckpt_interval > 0 && t > 0 && t.is_multiple_of(ckpt_interval) {
            checkpoints.push(Checkpoint {
                t,
                point: state.x.clone(),
            });
        }
        let record_this = t % stride == 0;
        let snap = if record_this {
            Some(snapshot(&state)?)
        } else {
            None
        };
        let outcome = step(&mut state, oracle, spec, hp, opts.value_bits)?;
        total_bits += outcome.bits;
        max_rel = max_rel.max(outcome.y_identity_rel_err);
        if let Some((f, grad_norm, err_norm, f_y, y_drift)) = snap {
            records.push(IterRecord {
                t,
                f,
                grad_norm,
                err_norm,
                f_y,
                y_drift,
                bits: outcome.bits,
                reset: did_reset,
            });
        }
    }

    // Final state record (no step follows it).
    if !opts.reset_error
        && ckpt_interval > 0
        && hp.iters > 0
        && hp.iters.is_multiple_of(ckpt_interval)
    {
        checkpoints.push(Checkpoint {
            t: hp.iters,
            point: state.x.clone(),
        });
    }
    let (f, grad_norm, err_norm, f_y, y_drift) = snapshot(&state)?;
    records.push(IterRecord {
        t: hp.iters,
        f,
        grad_norm,
        err_norm,
        f_y,
        y_drift,
        bits: 0,
        reset: false,
    });

    Ok(RunTrace {
        records,
        checkpoints,
        total_bits,
        reset_count,
        max_y_identity_rel_err: max_rel,
        final_t: hp.iters,
        final_f: f,
        final_grad_norm: grad_norm,
    })
}
