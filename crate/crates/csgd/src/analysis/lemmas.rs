//! Empirical checks of the descent inequality, the compression-error bound,
//! and the improve-or-localize inequality, evaluated on recorded traces.
//!
//! All three consume traces recorded at stride 1 (one record per iteration);
//! they validate that before doing any arithmetic.

use serde::Serialize;

use crate::error::{Error, Result};
use crate::optimizer::HyperParams;
use crate::trace::RunTrace;

use super::stats;

fn require_dense(trace: &RunTrace) -> Result<()> {
    let expected = trace.final_t + 1;
    if trace.records.len() as u64 != expected {
        return Err(Error::parameter(format!(
            "lemma checks need one record per iteration ({expected}), trace has {}",
            trace.records.len()
        )));
    }
    Ok(())
}

/// One-trace descent inequality
/// sum_{tau < T} ||grad f(x_tau)||^2 <= 4 (f(y_0) - f(y_T)) / eta
///   + eta chi^2 T (2L + 8 (1-mu) L^2 eta / mu^2).
#[derive(Debug, Clone, Copy, Serialize)]
pub struct DescentCheck {
    pub lhs: f64,
    pub rhs: f64,
    /// rhs - lhs; nonnegative when the inequality holds.
    pub slack: f64,
}

pub fn descent_lemma_check(trace: &RunTrace, hp: &HyperParams) -> Result<DescentCheck> {
    require_dense(trace)?;
    let t_end = trace.final_t;
    let lhs: f64 = trace
        .records
        .iter()
        .filter(|r| r.t < t_end)
        .map(|r| r.grad_norm * r.grad_norm)
        .sum();
    let f_y0 = trace.records.first().unwrap().f_y;
    let f_yt = trace.records.last().unwrap().f_y;
    let mu = hp.mu;
    let rhs = 4.0 * (f_y0 - f_yt) / hp.eta
        + hp.eta
            * hp.chi_sq
            * t_end as f64
            * (2.0 * hp.l + 8.0 * (1.0 - mu) * hp.l * hp.l * hp.eta / (mu * mu));
    Ok(DescentCheck {
        lhs,
        rhs,
        slack: rhs - lhs,
    })
}

#[derive(Debug, Clone, Copy, Serialize)]
pub struct AveragedDescentCheck {
    pub mean_slack: f64,
    pub std_err: f64,
    pub seeds: usize,
}

/// Seed-averaged form of the descent inequality (both sides of the lemma
/// are expectations; the seed mean of the per-seed slack estimates it).
pub fn descent_lemma_check_averaged(
    traces: &[RunTrace],
    hp: &HyperParams,
) -> Result<AveragedDescentCheck> {
    if traces.is_empty() {
        return Err(Error::parameter("no traces"));
    }
    let slacks: Vec<f64> = traces
        .iter()
        .map(|t| descent_lemma_check(t, hp).map(|c| c.slack))
        .collect::<Result<_>>()?;
    Ok(AveragedDescentCheck {
        mean_slack: stats::mean(&slacks),
        std_err: stats::std_err(&slacks),
        seeds: slacks.len(),
    })
}

/// Seed-averaged compression-error bound
/// E||e_t||^2 <= (4(1-mu)/mu^2) (max_{i<t} E||grad f(x_i)||^2 + chi^2).
#[derive(Debug, Clone, Copy, Serialize)]
pub struct ErrorBoundCheck {
    /// Smallest value of bound - E||e_t||^2 over t; nonnegative = holds.
    pub worst_margin: f64,
    pub worst_t: u64,
    pub seeds: usize,
}

pub fn error_bound_check(traces: &[RunTrace], hp: &HyperParams) -> Result<ErrorBoundCheck> {
    if traces.is_empty() {
        return Err(Error::parameter("no traces"));
    }
    for t in traces {
        require_dense(t)?;
    }
    let t_end = traces[0].final_t;
    let n = traces.len() as f64;
    let mu = hp.mu;
    let factor = 4.0 * (1.0 - mu) / (mu * mu);
    let mut running_max_grad_sq = 0.0f64;
    let mut worst_margin = f64::INFINITY;
    let mut worst_t = 0;
    for t in 0..=t_end {
        let idx = t as usize;
        let mean_err_sq = traces
            .iter()
            .map(|tr| tr.records[idx].err_norm.powi(2))
            .sum::<f64>()
            / n;
        // the bound at time t uses gradients at iterations i < t
        let bound = factor * (running_max_grad_sq + hp.chi_sq);
        let margin = bound - mean_err_sq;
        if margin < worst_margin {
            worst_margin = margin;
            worst_t = t;
        }
        let mean_grad_sq = traces
            .iter()
            .map(|tr| tr.records[idx].grad_norm.powi(2))
            .sum::<f64>()
            / n;
        running_max_grad_sq = running_max_grad_sq.max(mean_grad_sq);
    }
    Ok(ErrorBoundCheck {
        worst_margin,
        worst_t,
        seeds: traces.len(),
    })
}

/// Improve-or-localize inequality anchored at the start of the run:
/// f(y_0) - E f(y_t) >= E||y_t - y_0||^2 / (8 eta t)
///   - eta^2 chi^2 t (L + 2(1-mu) L^2 eta / mu^2) - eta chi^2.
#[derive(Debug, Clone, Copy, Serialize)]
pub struct WindowSlack {
    pub t: u64,
    pub mean_slack: f64,
    pub std_err: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct IolReport {
    pub worst: WindowSlack,
    pub windows: Vec<WindowSlack>,
}

pub fn improve_or_localize_check(
    traces: &[RunTrace],
    hp: &HyperParams,
    t_max: u64,
) -> Result<IolReport> {
    if traces.is_empty() {
        return Err(Error::parameter("no traces"));
    }
    for t in traces {
        require_dense(t)?;
    }
    let horizon = t_max.min(traces[0].final_t);
    if horizon == 0 {
        // the t = 0 window is trivial: both sides are zero
        let trivial = WindowSlack {
            t: 0,
            mean_slack: 0.0,
            std_err: 0.0,
        };
        return Ok(IolReport {
            worst: trivial,
            windows: vec![trivial],
        });
    }
    let mu = hp.mu;
    let correction_rate =
        hp.eta * hp.eta * hp.chi_sq * (hp.l + 2.0 * (1.0 - mu) * hp.l * hp.l * hp.eta / (mu * mu));
    let mut windows = Vec::with_capacity(horizon as usize);
    let mut worst = WindowSlack {
        t: 0,
        mean_slack: f64::INFINITY,
        std_err: 0.0,
    };
    for t in 1..=horizon {
        let idx = t as usize;
        let slacks: Vec<f64> = traces
            .iter()
            .map(|tr| {
                let r0 = &tr.records[0];
                let rt = &tr.records[idx];
                let lhs = r0.f_y - rt.f_y;
                let rhs = rt.y_drift * rt.y_drift / (8.0 * hp.eta * t as f64)
                    - correction_rate * t as f64
                    - hp.eta * hp.chi_sq;
                lhs - rhs
            })
            .collect();
        let w = WindowSlack {
            t,
            mean_slack: stats::mean(&slacks),
            std_err: stats::std_err(&slacks),
        };
        if w.mean_slack < worst.mean_slack {
            worst = w;
        }
        windows.push(w);
    }
    Ok(IolReport { worst, windows })
}
