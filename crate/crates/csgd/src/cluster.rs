//! Simulated synchronous W-worker execution with per-worker error
//! accumulators, shared compressor randomness, coordinator averaging, and
//! exact communication accounting.
//!
//! Each round: every worker i forms u_i = e_i + grad F_i(x, theta_i) + xi
//! (xi and the compressor randomness come from shared streams), compresses
//! it, and uplinks the message. The coordinator averages the decoded
//! gradients, broadcasts the new iterate, and each worker keeps
//! e_i' = u_i - g_i against its own message. The error-reset branch runs on
//! the coordinator's view of the averaged error.
//!
//! Workers run their gradient+compress phase in parallel; aggregation
//! happens in worker-index order, so traces are identical under any thread
//! interleaving.

use std::io::Write;

use serde::Serialize;

use crate::compressors::{compress_with, CompressorSpec};
use crate::error::{Error, Result};
use crate::linalg::{ParamVector, SeededRng};
use crate::objectives::StochasticOracle;
use crate::optimizer::{draw_xi, form_update_input, theta_rng, theta_tilde_rng, HyperParams};
use crate::parallel;
use crate::trace::{Checkpoint, IterRecord, RunTrace};

#[derive(Debug, Clone)]
pub struct WorkerState {
    pub id: usize,
    pub e: ParamVector,
}

#[derive(Debug, Clone, Copy)]
pub struct ClusterOptions {
    pub reset_error: bool,
    pub value_bits: u32,
    pub record_every: u64,
    /// Re-compress the coordinator's average before broadcast. Off by
    /// default: the dense broadcast matches the synchronous protocol the
    /// analysis covers.
    pub compress_downlink: bool,
}

impl Default for ClusterOptions {
    fn default() -> Self {
        ClusterOptions {
            reset_error: false,
            value_bits: 64,
            record_every: 1,
            compress_downlink: false,
        }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct LedgerEntry {
    pub round: u64,
    pub worker: usize,
    pub uplink_bits: u64,
    pub downlink_bits: u64,
}

/// Per-round, per-worker communication record with exact cumulative totals.
#[derive(Debug, Clone, Default, Serialize)]
pub struct CommLedger {
    pub entries: Vec<LedgerEntry>,
    pub total_uplink_bits: u64,
    pub total_downlink_bits: u64,
}

impl CommLedger {
    pub const CSV_HEADER: &'static str = "round,worker,uplink_bits,downlink_bits";

    fn push(&mut self, entry: LedgerEntry) {
        self.total_uplink_bits += entry.uplink_bits;
        self.total_downlink_bits += entry.downlink_bits;
        self.entries.push(entry);
    }

    pub fn write_csv<W: Write>(&self, mut w: W) -> Result<()> {
        writeln!(w, "{}", Self::CSV_HEADER)?;
        for e in &self.entries {
            writeln!(
                w,
                "{},{},{},{}",
                e.round, e.worker, e.uplink_bits, e.downlink_bits
            )?;
        }
        Ok(())
    }

    pub fn csv_string(&self) -> String {
        let mut buf = Vec::new();
        self.write_csv(&mut buf).expect("write to Vec cannot fail");
        String::from_utf8(buf).expect("CSV is ASCII")
    }
}

/// Average of per-worker vectors in worker-index order. The single-worker
/// case returns the vector itself so that a one-worker cluster is bitwise
/// identical to the single-process engine.
fn average(vectors: &[ParamVector]) -> ParamVector {
    if vectors.len() == 1 {
        return vectors[0].clone();
    }
    let mut acc = ParamVector::zeros(vectors[0].dim());
    for v in vectors {
        acc = acc.add(v);
    }
    acc.scale(1.0 / vectors.len() as f64)
}

fn average_errors(workers: &[WorkerState]) -> ParamVector {
    if workers.len() == 1 {
        return workers[0].e.clone();
    }
    let mut acc = ParamVector::zeros(workers[0].e.dim());
    for w in workers {
        acc = acc.add(&w.e);
    }
    acc.scale(1.0 / workers.len() as f64)
}

#[derive(Debug, Clone)]
pub struct RoundOutcome {
    pub uplink_bits: Vec<u64>,
    pub downlink_bits_per_worker: u64,
    /// Relative residual of y_{t+1} - y_t = -eta (avg grad + xi) on the
    /// coordinator view; 0 when the downlink is compressed (the identity
    /// only covers the dense broadcast).
    pub y_identity_rel_err: f64,
}

/// One synchronous round. Mutates `x` and the worker error accumulators.
#[allow(clippy::too_many_arguments)]
pub fn round(
    x: &mut ParamVector,
    workers: &mut [WorkerState],
    oracles: &[StochasticOracle],
    spec: &CompressorSpec,
    hp: &HyperParams,
    opts: &ClusterOptions,
    seed: u64,
    t: u64,
) -> Result<RoundOutcome> {
    let w_count = workers.len();
    if w_count == 0 || oracles.len() != w_count {
        return Err(Error::parameter(
            "round requires at least one worker and one oracle per worker",
        ));
    }
    if x.dim() != spec.d {
        return Err(Error::DimensionMismatch {
            expected: spec.d,
            got: x.dim(),
        });
    }
    let xi = draw_xi(seed, t, hp)?;
    let shared_draw = spec.draw(&mut theta_tilde_rng(seed, t));

    let e_bar_before = average_errors(workers);
    let x_snapshot = x.clone();
    let workers_view: &[WorkerState] = workers;
    let phase: Vec<Result<(ParamVector, ParamVector, u64)>> = parallel::map_indexed(w_count, |i| {
        let grad = oracles[i].sample_gradient(&x_snapshot, &mut theta_rng(seed, t, i as u64))?;
        let u = form_update_input(&workers_view[i].e, &grad, &xi);
        let (g, msg) = compress_with(spec, &u, &shared_draw, opts.value_bits)?;
        Ok((u, g, msg.cost_bits))
    });

    let mut us = Vec::with_capacity(w_count);
    let mut gs = Vec::with_capacity(w_count);
    let mut uplink_bits = Vec::with_capacity(w_count);
    for r in phase {
        let (u, g, bits) = r?;
        us.push(u);
        gs.push(g);
        uplink_bits.push(bits);
    }

    let g_avg = average(&gs);
    let (g_bcast, downlink_bits_per_worker) = if opts.compress_downlink {
        let mut rng = SeededRng::new(
            seed,
            crate::linalg::stream_id(&[crate::linalg::purpose::DOWNLINK, t]),
        );
        let (g, msg) = crate::compressors::compress(spec, &g_avg, &mut rng)?;
        (g, msg.cost_bits)
    } else {
        (g_avg.clone(), spec.d as u64 * opts.value_bits as u64)
    };

    let new_x = x.add_scaled(-hp.eta, &g_bcast);
    for (i, worker) in workers.iter_mut().enumerate() {
        worker.e = us[i].sub(&gs[i]);
    }

    // Corrected-iterate identity on the coordinator view.
    let rel = if opts.compress_downlink {
        0.0
    } else {
        let u_bar = average(&us);
        let v = u_bar.sub(&e_bar_before);
        let y_before = x_snapshot.add_scaled(-hp.eta, &e_bar_before);
        let e_bar_after = average_errors(workers);
        let y_after = new_x.add_scaled(-hp.eta, &e_bar_after);
        let resid = y_after.sub(&y_before).add_scaled(hp.eta, &v).norm();
        resid / (1.0 + hp.eta * v.norm())
    };

    if !new_x.is_finite() {
        return Err(Error::NonFinite {
            t,
            context: "distributed iterate".into(),
        });
    }
    *x = new_x;
    Ok(RoundOutcome {
        uplink_bits,
        downlink_bits_per_worker,
        y_identity_rel_err: rel,
    })
}

/// Full synchronous distributed run. The reset test runs on the
/// coordinator's view x - eta * e_bar; on reset every worker zeroes its
/// local error. Returns the trace plus the exact communication ledger.
pub fn distributed_run(
    oracles: &[StochasticOracle],
    spec: &CompressorSpec,
    hp: &HyperParams,
    opts: &ClusterOptions,
    x0: ParamVector,
    seed: u64,
) -> Result<(RunTrace, CommLedger)> {
    if oracles.is_empty() {
        return Err(Error::parameter(
            "distributed_run needs at least one worker",
        ));
    }
    let obj = oracles[0].objective();
    obj.value(&x0)?;
    let d = obj.dim();
    let w_count = oracles.len();

    let mut x = x0.clone();
    let mut workers: Vec<WorkerState> = (0..w_count)
        .map(|id| WorkerState {
            id,
            e: ParamVector::zeros(d),
        })
        .collect();
    let mut t_prime = 0u64;
    let mut x_anchor = x0;
    let y0 = x.clone(); // e = 0 at start

    let mut records: Vec<IterRecord> = Vec::new();
    let mut checkpoints = Vec::new();
    let mut ledger = CommLedger::default();
    let mut total_bits = 0u64;
    let mut reset_count = 0u64;
    let mut max_rel = 0.0f64;
    let ckpt_interval = hp.escape_iters_int();
    let stride = opts.record_every.max(1);

    let snapshot = |x: &ParamVector, e_bar: &ParamVector| -> Result<(f64, f64, f64, f64, f64)> {
        let y = x.add_scaled(-hp.eta, e_bar);
        Ok((
            obj.value(x)?,
            obj.gradient(x)?.norm(),
            e_bar.norm(),
            obj.value(&y)?,
            y.sub(&y0).norm(),
        ))
    };

    for t in 0..hp.iters {
        // coordinator-side reset on the averaged error
        let mut did_reset = false;
        if opts.reset_error {
            let e_bar = average_errors(&workers);
            let y = x.add_scaled(-hp.eta, &e_bar);
            let elapsed = (t - t_prime) as f64;
            if elapsed > hp.escape_iters || x_anchor.sub(&y).norm() > hp.escape_radius {
                x = y;
                for w in workers.iter_mut() {
                    w.e = ParamVector::zeros(d);
                }
                t_prime = t;
                x_anchor = x.clone();
                did_reset = true;
                reset_count += 1;
                checkpoints.push(Checkpoint {
                    t,
                    point: x.clone(),
                });
            }
        }
        if !opts.reset_error && ckpt_interval > 0 && t > 0 && t.is_multiple_of(ckpt_interval) {
            checkpoints.push(Checkpoint {
                t,
                point: x.clone(),
            });
        }

        let record_this = t % stride == 0;
        let snap = if record_this {
            Some(snapshot(&x, &average_errors(&workers))?)
        } else {
            None
        };

        let outcome = round(&mut x, &mut workers, oracles, spec, hp, opts, seed, t)?;
        let round_bits: u64 = outcome.uplink_bits.iter().sum();
        total_bits += round_bits;
        max_rel = max_rel.max(outcome.y_identity_rel_err);
        for (i, &bits) in outcome.uplink_bits.iter().enumerate() {
            ledger.push(LedgerEntry {
                round: t,
                worker: i,
                uplink_bits: bits,
                downlink_bits: outcome.downlink_bits_per_worker,
            });
        }

        if let Some((f, grad_norm, err_norm, f_y, y_drift)) = snap {
            records.push(IterRecord {
                t,
                f,
                grad_norm,
                err_norm,
                f_y,
                y_drift,
                bits: round_bits,
                reset: did_reset,
            });
        }
    }

    if !opts.reset_error
        && ckpt_interval > 0
        && hp.iters > 0
        && hp.iters.is_multiple_of(ckpt_interval)
    {
        checkpoints.push(Checkpoint {
            t: hp.iters,
            point: x.clone(),
        });
    }
    let (f, grad_norm, err_norm, f_y, y_drift) = snapshot(&x, &average_errors(&workers))?;
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

    Ok((
        RunTrace {
            records,
            checkpoints,
            total_bits,
            reset_count,
            max_y_identity_rel_err: max_rel,
            final_t: hp.iters,
            final_f: f,
            final_grad_norm: grad_norm,
        },
        ledger,
    ))
}

/// Worst relative deviations between the distributed run and the
/// single-process recursion on the averaged oracle, executed in lockstep.
#[derive(Debug, Clone, Copy, Serialize)]
pub struct EquivalenceReport {
    pub max_x_rel_dev: f64,
    pub max_e_rel_dev: f64,
}

/// For a linear compressor with shared randomness, averaging commutes with
/// compression, so the distributed iterates must match the single-process
/// run whose oracle returns the average of the per-worker stochastic
/// gradients. This runs both recursions side by side and reports the worst
/// deviation; it is the independent route the equivalence tests check
/// against.
pub fn equivalence_deviation(
    oracles: &[StochasticOracle],
    spec: &CompressorSpec,
    hp: &HyperParams,
    value_bits: u32,
    x0: ParamVector,
    seed: u64,
) -> Result<EquivalenceReport> {
    let w_count = oracles.len();
    if w_count == 0 {
        return Err(Error::parameter("need at least one worker"));
    }
    let d = x0.dim();
    let opts = ClusterOptions {
        reset_error: false,
        value_bits,
        record_every: u64::MAX,
        compress_downlink: false,
    };

    let mut x_dist = x0.clone();
    let mut workers: Vec<WorkerState> = (0..w_count)
        .map(|id| WorkerState {
            id,
            e: ParamVector::zeros(d),
        })
        .collect();

    let mut x_ref = x0;
    let mut e_ref = ParamVector::zeros(d);

    let mut report = EquivalenceReport {
        max_x_rel_dev: 0.0,
        max_e_rel_dev: 0.0,
    };
    for t in 0..hp.iters {
        round(&mut x_dist, &mut workers, oracles, spec, hp, &opts, seed, t)?;

        // reference: same streams, gradients averaged before compression
        let xi = draw_xi(seed, t, hp)?;
        let grads: Vec<ParamVector> = (0..w_count)
            .map(|i| oracles[i].sample_gradient(&x_ref, &mut theta_rng(seed, t, i as u64)))
            .collect::<Result<_>>()?;
        let g_bar = average(&grads);
        let u = form_update_input(&e_ref, &g_bar, &xi);
        let draw = spec.draw(&mut theta_tilde_rng(seed, t));
        let (g, _) = compress_with(spec, &u, &draw, value_bits)?;
        x_ref = x_ref.add_scaled(-hp.eta, &g);
        e_ref = u.sub(&g);

        let x_dev = x_dist.sub(&x_ref).norm() / (1.0 + x_ref.norm());
        let e_dev = average_errors(&workers).sub(&e_ref).norm() / (1.0 + e_ref.norm());
        report.max_x_rel_dev = report.max_x_rel_dev.max(x_dev);
        report.max_e_rel_dev = report.max_e_rel_dev.max(e_dev);
    }
    Ok(report)
}
