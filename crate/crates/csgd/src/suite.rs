//! Acceptance battery: one function per criterion, each returning a
//! structured pass/fail result. The CLI `suite` subcommand and the
//! integration tests both drive these.
//!
//! Every tolerance, seed and configuration below is pinned; nothing is
//! calibrated at run time.

use std::time::Instant;

use serde::Serialize;

use crate::analysis::{
    beta_bounds_hold, coupling_experiment, descent_lemma_check, descent_lemma_check_averaged,
    error_bound_check, escape_experiment, sosp_fraction, stats, CouplingExperimentConfig,
};
use crate::cluster::{distributed_run, equivalence_deviation, ClusterOptions};
use crate::compressors::{
    compress_with, compression_factor_estimate, CompressorKind, CompressorSpec,
};
use crate::error::Result;
use crate::linalg::{purpose, stream_id, DenseMatrix, ParamVector, SeededRng};
use crate::objectives::{NoiseKind, Objective, StochasticOracle};
use crate::optimizer::{
    descent_step_cap, plan, run, suggested_random_k, HyperParams, ManualParams, OptimizerState,
    PlanConstants, PlanInputs, RunOptions,
};
use crate::parallel;
use crate::trace::RunTrace;

#[derive(Debug, Clone, Serialize)]
pub struct CheckResult {
    pub id: &'static str,
    pub name: &'static str,
    pub passed: bool,
    pub seconds: f64,
    pub details: String,
}

impl CheckResult {
    pub fn line(&self) -> String {
        format!(
            "{} {:<28} [{:>7.2}s] {}",
            if self.passed { "PASS" } else { "FAIL" },
            self.name,
            self.seconds,
            self.details
        )
    }
}

fn check<F>(id: &'static str, name: &'static str, budget_s: f64, body: F) -> CheckResult
where
    F: FnOnce() -> Result<(bool, String)>,
{
    let start = Instant::now();
    let outcome = body();
    let seconds = start.elapsed().as_secs_f64();
    match outcome {
        Ok((ok, details)) => {
            let in_budget = seconds < budget_s;
            let details = if in_budget {
                details
            } else {
                format!("{details}; OVER BUDGET {seconds:.1}s >= {budget_s}s")
            };
            CheckResult {
                id,
                name,
                passed: ok && in_budget,
                seconds,
                details,
            }
        }
        Err(e) => CheckResult {
            id,
            name,
            passed: false,
            seconds,
            details: format!("error: {e}"),
        },
    }
}

fn sweep_traces<X>(
    oracle: &StochasticOracle,
    spec: &CompressorSpec,
    hp: &HyperParams,
    opts: &RunOptions,
    x0_of: X,
    base_seed: u64,
    n_seeds: usize,
) -> Result<Vec<RunTrace>>
where
    X: Fn(u64) -> ParamVector + Sync + Send,
{
    parallel::map_indexed(n_seeds, |s| {
        let seed = stream_id(&[purpose::SWEEP, base_seed, s as u64]);
        run(oracle, spec, hp, opts, x0_of(s as u64), seed)
    })
    .into_iter()
    .collect()
}

fn double_well_oracle(d: usize, box_b: f64, sigma: f64) -> StochasticOracle {
    let obj = Objective::double_well(d, box_b).expect("valid double well");
    StochasticOracle::new(obj, NoiseKind::AdditiveGaussian, sigma).expect("valid oracle")
}

/// Criterion 1: Monte-Carlo contraction ratios for every mu-compressor and
/// per-coordinate unbiasedness of Quantization. d = 100, 1e5 trials.
pub fn criterion_01_compressor_contracts() -> CheckResult {
    check("1", "compressor-contracts", 10.0, || {
        let d = 100;
        let trials = 100_000;
        let bound_slack = 3.0 / (trials as f64).sqrt();
        let mut details = String::new();
        let mut ok = true;
        let kinds = [
            ("identity", CompressorKind::Identity),
            ("random_k(1)", CompressorKind::RandomK { k: 1 }),
            ("random_k(10)", CompressorKind::RandomK { k: 10 }),
            ("random_k(100)", CompressorKind::RandomK { k: 100 }),
            ("top_k(10)", CompressorKind::TopK { k: 10 }),
            ("sign", CompressorKind::Sign),
        ];
        for (name, kind) in kinds {
            let spec = CompressorSpec::new(kind, d)?;
            let est = compression_factor_estimate(
                &spec,
                |r| r.standard_normal_vector(d),
                trials,
                &SeededRng::new(0xC0_01, 0),
            )?;
            let bound = (1.0 - spec.mu().unwrap()) + bound_slack;
            let this_ok = est.ratio <= bound;
            ok &= this_ok;
            details.push_str(&format!("{name}:{:.4}<={bound:.4} ", est.ratio));
        }

        // Quantization s = 1 unbiasedness, 3 sigma-hat per coordinate.
        let spec = CompressorSpec::new(CompressorKind::Quantization { s: 1 }, d)?;
        let x = SeededRng::new(0xC0_02, 0).standard_normal_vector(d);
        let chunks = 100usize;
        let per_chunk = trials / chunks;
        let partials = parallel::map_indexed(chunks, |c| {
            let mut sum = vec![0.0; d];
            let mut sum_sq = vec![0.0; d];
            for i in 0..per_chunk {
                let t = (c * per_chunk + i) as u64;
                let mut rng = SeededRng::new(0xC0_03, stream_id(&[purpose::TRIAL, t]));
                let (cvec, _) = crate::compressors::compress(&spec, &x, &mut rng).unwrap();
                for j in 0..d {
                    sum[j] += cvec[j];
                    sum_sq[j] += cvec[j] * cvec[j];
                }
            }
            (sum, sum_sq)
        });
        let n = (chunks * per_chunk) as f64;
        let mut worst_z = 0.0f64;
        for j in 0..d {
            let (mut s1, mut s2) = (0.0, 0.0);
            for (a, b) in &partials {
                s1 += a[j];
                s2 += b[j];
            }
            let mean = s1 / n;
            let var = (s2 / n - mean * mean).max(0.0);
            let se = (var / n).sqrt();
            let z = if se > 0.0 {
                (mean - x[j]).abs() / se
            } else if (mean - x[j]).abs() == 0.0 {
                0.0
            } else {
                f64::INFINITY
            };
            worst_z = worst_z.max(z);
        }
        ok &= worst_z <= 3.0;
        details.push_str(&format!("quantization worst z={worst_z:.2}<=3"));
        Ok((ok, details))
    })
}

/// Criterion 2: RandomK is linear at fixed randomness; TopK is not, with a
/// recorded witness.
pub fn criterion_02_linearity() -> CheckResult {
    check("2", "linearity", 1.0, || {
        let d = 100;
        let rk = CompressorSpec::new(CompressorKind::RandomK { k: 10 }, d)?;
        let mut rng = SeededRng::new(0xC0_04, 0);
        let mut worst_rel = 0.0f64;
        for _ in 0..1000 {
            let draw = rk.draw(&mut rng);
            let x = rng.standard_normal_vector(d);
            let y = rng.standard_normal_vector(d);
            let a = 4.0 * rng.uniform_f64() - 2.0;
            let b = 4.0 * rng.uniform_f64() - 2.0;
            let (cx, _) = compress_with(&rk, &x, &draw, 64)?;
            let (cy, _) = compress_with(&rk, &y, &draw, 64)?;
            let (cc, _) = compress_with(&rk, &x.scale(a).add(&y.scale(b)), &draw, 64)?;
            let expect = cx.scale(a).add(&cy.scale(b));
            let rel = cc.sub(&expect).norm() / (1.0 + expect.norm());
            worst_rel = worst_rel.max(rel);
        }
        let rk_ok = worst_rel <= 1e-12;

        let tk = CompressorSpec::new(CompressorKind::TopK { k: 10 }, d)?;
        let mut witness = None;
        for trial in 0..1000u64 {
            let mut r = SeededRng::new(0xC0_05, stream_id(&[purpose::TRIAL, trial]));
            let x = r.standard_normal_vector(d);
            let y = r.standard_normal_vector(d);
            let (cx, _) = compress_with(&tk, &x, &crate::compressors::CompressorDraw::None, 64)?;
            let (cy, _) = compress_with(&tk, &y, &crate::compressors::CompressorDraw::None, 64)?;
            let (cc, _) = compress_with(
                &tk,
                &x.add(&y),
                &crate::compressors::CompressorDraw::None,
                64,
            )?;
            let gap = cc.sub(&cx.add(&cy)).norm();
            if gap > 1e-6 {
                witness = Some((trial, gap));
                break;
            }
        }
        let tk_ok = witness.is_some();
        let details = format!(
            "random_k worst rel={worst_rel:.2e}; top_k witness={:?}",
            witness.map(|(t, g)| format!("trial {t}, gap {g:.3e}"))
        );
        Ok((rk_ok && tk_ok, details))
    })
}

fn all_kinds(d: usize) -> Vec<CompressorSpec> {
    vec![
        CompressorSpec::new(CompressorKind::Identity, d).unwrap(),
        CompressorSpec::new(CompressorKind::RandomK { k: 2 }, d).unwrap(),
        CompressorSpec::new(CompressorKind::TopK { k: 2 }, d).unwrap(),
        CompressorSpec::new(CompressorKind::Sign, d).unwrap(),
        CompressorSpec::new(CompressorKind::Quantization { s: 1 }, d).unwrap(),
    ]
}

/// Criterion 3: the corrected-iterate identity holds to 1e-10 at every
/// iteration across objectives x compressors x reset flags x seeds.
///
/// d = 3 keeps the Quantization arm stable: with error feedback its error
/// recursion grows like sqrt(||u||_1/||u|| - 1) per step, which diverges
/// once the accumulated error spreads over 4+ coordinates.
pub fn criterion_03_corrected_iterate_identity() -> CheckResult {
    check("3", "corrected-iterate-identity", 30.0, || {
        let d = 3;
        let spectrum: Vec<f64> = (0..d)
            .map(|i| -0.5 + 1.5 * i as f64 / (d - 1) as f64)
            .collect();
        let objectives = vec![
            Objective::quadratic(DenseMatrix::from_spectrum(&spectrum, Some(5)), 50.0)?,
            Objective::cubic_reg_quadratic(
                DenseMatrix::from_spectrum(&spectrum, Some(6)),
                1.0,
                3.0,
            )?,
            Objective::double_well(d, 1.5)?,
        ];
        let mut worst = 0.0f64;
        let mut runs = 0usize;
        for obj in &objectives {
            let oracle = StochasticOracle::new(obj.clone(), NoiseKind::AdditiveGaussian, 0.1)?;
            for spec in all_kinds(d) {
                for reset in [false, true] {
                    let hp = HyperParams::manual(
                        &spec,
                        ManualParams {
                            l: obj.l,
                            rho: obj.rho.max(1.0),
                            sigma: 0.1,
                            eta: 1e-3,
                            noise_std: 0.1,
                            iters: 2000,
                            escape_iters: 500.0,
                            escape_radius: 0.5,
                            ..Default::default()
                        },
                    );
                    let opts = RunOptions {
                        reset_error: reset,
                        value_bits: 64,
                        record_every: u64::MAX,
                    };
                    let rels = parallel::map_indexed(10, |s| {
                        let seed = stream_id(&[purpose::SWEEP, 0xC3, runs as u64, s as u64]);
                        let mut rng = SeededRng::new(seed, stream_id(&[purpose::INIT]));
                        let x0 = rng.standard_normal_vector(d).scale(0.5);
                        run(&oracle, &spec, &hp, &opts, x0, seed).map(|t| t.max_y_identity_rel_err)
                    });
                    for r in rels {
                        worst = worst.max(r?);
                    }
                    runs += 10;
                }
            }
        }
        Ok((
            worst <= 1e-10,
            format!("{runs} runs x 2000 iters, worst rel err {worst:.2e} <= 1e-10"),
        ))
    })
}

/// Criterion 4: seed-averaged compression-error bound on quadratic runs,
/// RandomK k = d/10, d = 50, 100 seeds.
pub fn criterion_04_error_bound() -> CheckResult {
    check("4", "compression-error-bound", 30.0, || {
        let d = 50;
        let spectrum: Vec<f64> = (0..d).map(|i| 0.5 + i as f64 / (d - 1) as f64).collect();
        let obj = Objective::quadratic(DenseMatrix::from_spectrum(&spectrum, Some(12)), 20.0)?;
        let sigma = 0.5;
        let oracle = StochasticOracle::new(obj.clone(), NoiseKind::AdditiveGaussian, sigma)?;
        let spec = CompressorSpec::new(CompressorKind::RandomK { k: 5 }, d)?;
        let hp = HyperParams::manual(
            &spec,
            ManualParams {
                l: obj.l,
                sigma,
                eta: 2e-3,
                noise_std: 0.5,
                iters: 1500,
                ..Default::default()
            },
        );
        let opts = RunOptions::default();
        let traces = sweep_traces(
            &oracle,
            &spec,
            &hp,
            &opts,
            |s| {
                let mut rng = SeededRng::new(stream_id(&[purpose::INIT, 0xC4, s]), 0);
                rng.standard_normal_vector(d)
            },
            0xC4,
            100,
        )?;
        let report = error_bound_check(&traces, &hp)?;
        Ok((
            report.worst_margin >= 0.0,
            format!(
                "worst margin {:.4} at t={} over 100 seeds (bound factor {:.1})",
                report.worst_margin,
                report.worst_t,
                4.0 * (1.0 - hp.mu) / (hp.mu * hp.mu)
            ),
        ))
    })
}

/// Criterion 5: descent inequality, exact per seed at chi = 0 with
/// deterministic compressors, and in 200-seed average with chi > 0.
pub fn criterion_05_descent_lemma() -> CheckResult {
    check("5", "compressed-descent-lemma", 60.0, || {
        let d = 20;
        let mut details = String::new();
        let mut ok = true;

        // chi = 0: sigma = 0, r = 0, deterministic compressors, per seed.
        let oracle = double_well_oracle(d, 1.25, 0.0);
        let obj = oracle.objective().clone();
        let det_kinds = [
            CompressorKind::Identity,
            CompressorKind::TopK { k: 2 },
            CompressorKind::Sign,
        ];
        let mut worst_exact = f64::INFINITY;
        for kind in det_kinds {
            let spec = CompressorSpec::new(kind, d)?;
            let eta = 2e-3;
            assert!(eta < descent_step_cap(obj.l, spec.mu().unwrap()));
            let hp = HyperParams::manual(
                &spec,
                ManualParams {
                    l: obj.l,
                    rho: obj.rho,
                    eta,
                    iters: 2000,
                    ..Default::default()
                },
            );
            let traces = sweep_traces(
                &oracle,
                &spec,
                &hp,
                &RunOptions::default(),
                |s| {
                    let mut rng = SeededRng::new(stream_id(&[purpose::INIT, 0xC5, s]), 0);
                    rng.standard_normal_vector(d).scale(0.5)
                },
                0xC5,
                10,
            )?;
            for tr in &traces {
                let c = descent_lemma_check(tr, &hp)?;
                let tol = 1e-9 * c.rhs.abs().max(1.0);
                worst_exact = worst_exact.min(c.slack);
                ok &= c.slack >= -tol;
            }
        }
        details.push_str(&format!("chi=0 worst slack {worst_exact:.3e}; "));

        // chi > 0: 200-seed average within the Monte-Carlo band.
        let sigma = 0.3;
        let oracle = double_well_oracle(d, 1.25, sigma);
        let stoch_kinds = [
            CompressorKind::Identity,
            CompressorKind::RandomK { k: 2 },
            CompressorKind::TopK { k: 2 },
        ];
        for kind in stoch_kinds {
            let spec = CompressorSpec::new(kind, d)?;
            let hp = HyperParams::manual(
                &spec,
                ManualParams {
                    l: oracle.objective().l,
                    rho: oracle.objective().rho,
                    sigma,
                    eta: 2e-3,
                    noise_std: 0.5,
                    iters: 2000,
                    ..Default::default()
                },
            );
            let traces = sweep_traces(
                &oracle,
                &spec,
                &hp,
                &RunOptions::default(),
                |s| {
                    let mut rng = SeededRng::new(stream_id(&[purpose::INIT, 0xC5B, s]), 0);
                    rng.standard_normal_vector(d).scale(0.5)
                },
                0xC5B,
                200,
            )?;
            let avg = descent_lemma_check_averaged(&traces, &hp)?;
            let this_ok = avg.mean_slack >= -3.0 * avg.std_err;
            ok &= this_ok;
            details.push_str(&format!(
                "{kind:?} mean slack {:.3} (se {:.3}); ",
                avg.mean_slack, avg.std_err
            ));
        }
        Ok((ok, details))
    })
}

/// Criterion 6: at least half of visited points are eps-FOSP in at least
/// 18 of 20 seeds. DoubleWell d=20, eps=0.05, planned eta, T capped at 1e5.
pub fn criterion_06_fosp_at_desk_scale() -> CheckResult {
    check("6", "fosp-theorem-desk-scale", 120.0, || {
        let d = 20;
        let epsilon = 0.05;
        let oracle = double_well_oracle(d, 1.25, 0.0);
        let obj = oracle.objective().clone();
        let spec = CompressorSpec::new(CompressorKind::Identity, d)?;
        let x0 = ParamVector::constant(d, 0.5);
        let f_max = obj.value(&x0)? - obj.f_lower;
        let inputs = PlanInputs {
            epsilon,
            l: obj.l,
            rho: obj.rho,
            sigma: 0.0,
            ell_tilde: oracle.ell_tilde(),
            f_max,
            d,
            lipschitz_sg: true,
            t_cap: Some(100_000),
        };
        let hp = plan(&inputs, &spec, &PlanConstants::default())?;
        let fractions = parallel::map_indexed(20, |s| -> Result<f64> {
            let seed = stream_id(&[purpose::SWEEP, 0xC6, s as u64]);
            let trace = run(
                &oracle,
                &spec,
                &hp,
                &RunOptions::default(),
                x0.clone(),
                seed,
            )?;
            let total = trace.records.len() as f64;
            let fosp = trace
                .records
                .iter()
                .filter(|r| r.grad_norm <= epsilon)
                .count() as f64;
            Ok(fosp / total)
        });
        let fractions: Vec<f64> = fractions.into_iter().collect::<Result<_>>()?;
        let passing = fractions.iter().filter(|&&f| f >= 0.5).count();
        Ok((
            passing >= 18,
            format!(
                "planned eta={:.3e} T={}; {passing}/20 seeds with FOSP fraction >= 0.5 (median {:.3})",
                hp.eta,
                hp.iters,
                stats::median(&fractions)
            ),
        ))
    })
}

fn escape_plan(
    oracle: &StochasticOracle,
    spec: &CompressorSpec,
    epsilon: f64,
    x0: &ParamVector,
) -> Result<HyperParams> {
    let obj = oracle.objective();
    let f_max = obj.value(x0)? - obj.f_lower;
    let inputs = PlanInputs {
        epsilon,
        l: obj.l,
        rho: obj.rho,
        sigma: oracle.sigma,
        ell_tilde: oracle.ell_tilde(),
        f_max,
        d: obj.dim(),
        lipschitz_sg: oracle.lipschitz_sg(),
        t_cap: None,
    };
    // Desk-scale escape constants: a small fixed escape budget constant and
    // a full-size radius keep I affordable while leaving the escape-time
    // margin demonstrated in the unit analysis.
    let constants = PlanConstants {
        c_i: Some(2.0),
        c_rad: 1.0,
        ..Default::default()
    };
    plan(&inputs, spec, &constants)
}

/// Criterion 7: from the strict saddle at the origin, the objective drops
/// below f(x0) - F within I iterations in >= 90% of 50 seeds, for Identity,
/// RandomK and TopK (the latter with error resets); with r = sigma = 0 the
/// origin is an exact fixed point.
pub fn criterion_07_sosp_escape() -> CheckResult {
    check("7", "sosp-escape", 120.0, || {
        let d = 10;
        let epsilon = 0.1;
        let oracle = double_well_oracle(d, 1.25, 0.0);
        let x0 = ParamVector::zeros(d);
        let mut details = String::new();
        let mut ok = true;
        let cases = [
            ("identity", CompressorKind::Identity, false),
            ("random_k(2)", CompressorKind::RandomK { k: 2 }, false),
            ("top_k(2)", CompressorKind::TopK { k: 2 }, true),
        ];
        for (name, kind, reset) in cases {
            let spec = CompressorSpec::new(kind, d)?;
            let hp = escape_plan(&oracle, &spec, epsilon, &x0)?;
            let report = escape_experiment(&oracle, &spec, &hp, reset, &x0, 0xC7, 50)?;
            let this_ok = report.success_rate >= 0.9;
            ok &= this_ok;
            details.push_str(&format!("{name}: rate {:.2}; ", report.success_rate));
        }

        // exact fixed point without noise
        let spec = CompressorSpec::new(CompressorKind::Identity, d)?;
        let hp = HyperParams::manual(
            &spec,
            ManualParams {
                epsilon,
                l: oracle.objective().l,
                rho: oracle.objective().rho,
                eta: 1e-3,
                iters: 100,
                escape_iters: 100.0,
                escape_radius: 1.0,
                escape_decrease: 1e-6,
                ..Default::default()
            },
        );
        let mut state = OptimizerState::new(x0.clone(), 0xC7F);
        for _ in 0..100 {
            crate::optimizer::step(&mut state, &oracle, &spec, &hp, 64)?;
        }
        let frozen = state.x.as_slice().iter().all(|&v| v == 0.0);
        ok &= frozen;
        details.push_str(&format!("zero-noise fixed point: {frozen}"));
        Ok((ok, details))
    })
}

/// Criterion 8: median checkpoint SOSP fraction >= 0.5 over 20 seeds for
/// RandomK (iterates sampled every I) and TopK (reset-trigger checkpoints).
pub fn criterion_08_sosp_fraction() -> CheckResult {
    check("8", "sosp-fraction", 300.0, || {
        let d = 10;
        let epsilon = 0.1;
        let oracle = double_well_oracle(d, 1.25, 0.0);
        let obj = oracle.objective().clone();
        let x0 = ParamVector::zeros(d);
        let mut details = String::new();
        let mut ok = true;
        let cases = [
            ("random_k(2)", CompressorKind::RandomK { k: 2 }, false),
            ("top_k(2)", CompressorKind::TopK { k: 2 }, true),
        ];
        for (name, kind, reset) in cases {
            let spec = CompressorSpec::new(kind, d)?;
            let hp = escape_plan(&oracle, &spec, epsilon, &x0)?;
            let opts = RunOptions {
                reset_error: reset,
                value_bits: 64,
                record_every: u64::MAX,
            };
            let fractions = parallel::map_indexed(20, |s| -> Result<f64> {
                let seed = stream_id(&[purpose::SWEEP, 0xC8, s as u64]);
                let trace = run(&oracle, &spec, &hp, &opts, x0.clone(), seed)?;
                let points: Vec<ParamVector> =
                    trace.checkpoints.into_iter().map(|c| c.point).collect();
                let (frac, _) = sosp_fraction(&points, &obj, epsilon, &hp)?;
                Ok(frac)
            });
            let fractions: Vec<f64> = fractions.into_iter().collect::<Result<_>>()?;
            let med = stats::median(&fractions);
            let this_ok = med >= 0.5;
            ok &= this_ok;
            details.push_str(&format!(
                "{name}: median fraction {med:.3} (T={}, I={}); ",
                hp.iters,
                hp.escape_iters_int()
            ));
        }
        Ok((ok, details))
    })
}

/// Criterion 9: coupled-difference growth rate on the quadratic saddle with
/// gamma = 0.5 matches ln(1 + eta gamma) within 10%, and the two coupled
/// sequences pass the distribution-equality tests.
pub fn criterion_09_coupling_growth() -> CheckResult {
    check("9", "coupling-growth", 120.0, || {
        let d = 10;
        let epsilon = 0.3;
        let mut spectrum = vec![1.0; d];
        spectrum[0] = -0.5;
        let obj = Objective::quadratic(DenseMatrix::from_diagonal(&spectrum), 100.0)?;
        let oracle = StochasticOracle::exact(obj.clone());
        let spec = CompressorSpec::new(CompressorKind::Identity, d)?;
        let inputs = PlanInputs {
            epsilon,
            l: obj.l,
            rho: 1.0, // any positive value upper-bounds a constant Hessian
            sigma: 0.0,
            ell_tilde: oracle.ell_tilde(),
            f_max: 10.0,
            d,
            lipschitz_sg: true,
            t_cap: None,
        };
        let constants = PlanConstants {
            c_i: Some(20.0),
            c_rad: 2.0,
            c_r: 0.01,
            ..Default::default()
        };
        let hp = plan(&inputs, &spec, &constants)?;
        let cfg = CouplingExperimentConfig {
            seeds: 200,
            base_seed: 0xC9,
            t_max: None,
            value_bits: 64,
        };
        let diag = coupling_experiment(&oracle, &spec, &hp, &ParamVector::zeros(d), &cfg)?;
        let (slope, w0, w1) = diag.fit_growth_rate(hp.escape_radius)?;
        let target = hp.eta * diag.gamma;
        let target_ln = (1.0f64 + target).ln();
        let slope_ok = (slope - target_ln).abs() <= 0.1 * target_ln;

        let (ks_d, ks_p) = diag.ks_end_values();
        let ks_ok = ks_p > 0.01;

        // paired moment agreement; tolerate the multiple-comparison tail
        let n_t = diag.mean_diff_over_se.len() as f64;
        let mean_viol = diag.mean_diff_over_se.iter().filter(|&&z| z > 3.0).count() as f64 / n_t;
        let var_viol = diag.var_diff_over_se.iter().filter(|&&z| z > 3.0).count() as f64 / n_t;
        let moments_ok = mean_viol <= 0.02 && var_viol <= 0.02;

        let ok = slope_ok && ks_ok && moments_ok && diag.max_bookkeeping_rel <= 1e-10;
        Ok((
            ok,
            format!(
                "slope {slope:.5} vs ln(1+eta*gamma)={target_ln:.5} over [{w0},{w1}); KS D={ks_d:.3} p={ks_p:.3}; moment z>3 fractions {mean_viol:.3}/{var_viol:.3}; bookkeeping {:.1e}",
                diag.max_bookkeeping_rel
            ),
        ))
    })
}

/// Criterion 10: both beta_t envelope inequalities, exactly, for
/// eta*gamma in {0.01, 0.1, 0.5, 1.0} and t up to 1e4.
pub fn criterion_10_beta_bounds() -> CheckResult {
    check("10", "beta-bounds", 1.0, || {
        let mut checked = 0u64;
        for eta_gamma in [0.01, 0.1, 0.5, 1.0] {
            for t in 0..=10_000u64 {
                if !beta_bounds_hold(t, eta_gamma) {
                    return Ok((
                        false,
                        format!("bound violated at t={t}, eta_gamma={eta_gamma}"),
                    ));
                }
                checked += 1;
            }
        }
        Ok((true, format!("{checked} (t, eta*gamma) pairs verified")))
    })
}

/// Criterion 11: the planner's RandomK sizing, iteration counts and
/// total-bit ratios reproduce the communication formulas symbolically.
pub fn criterion_11_communication_arithmetic() -> CheckResult {
    check("11", "communication-arithmetic", 1.0, || {
        let mut details = String::new();
        let mut ok = true;
        for d in [100usize, 1000, 10_000] {
            for epsilon in [0.1f64, 0.01, 0.001] {
                for alpha_is_d in [false, true] {
                    let alpha = if alpha_is_d { d as f64 } else { 1.0 };
                    // symbolic k = ceil(d eps^{3/4} / sqrt(alpha))
                    let k_exact = d as f64 * epsilon.powf(0.75) / alpha.sqrt();
                    let k = k_exact.ceil().max(1.0).min(d as f64) as usize;
                    ok &= suggested_random_k(d, epsilon, alpha) == k;

                    let mk_inputs = || PlanInputs {
                        epsilon,
                        l: 1.0,
                        rho: 1.0,
                        sigma: 1.0,
                        ell_tilde: if alpha_is_d { f64::INFINITY } else { 1.0 },
                        f_max: 1.0,
                        d,
                        lipschitz_sg: !alpha_is_d,
                        t_cap: None,
                    };
                    let constants = PlanConstants {
                        c_i: Some(8.0),
                        ..Default::default()
                    };
                    let id_spec = CompressorSpec::new(CompressorKind::Identity, d)?;
                    let rk_spec = CompressorSpec::new(CompressorKind::RandomK { k }, d)?;
                    let hp_id = plan(&mk_inputs(), &id_spec, &constants)?;
                    let hp_rk = plan(&mk_inputs(), &rk_spec, &constants)?;

                    // symbolic evaluation of the same plan, written out
                    let e2 = epsilon * epsilon;
                    let sym_eta_sigma = e2 / (1.0 + d as f64)
                        + if alpha_is_d {
                            0.0
                        } else {
                            (e2 / 2.0).min((1.0 * epsilon).sqrt())
                        };
                    let mu = k as f64 / d as f64;
                    let sym_eta_mu = (mu * epsilon / (1.0 - mu).sqrt())
                        .min(mu * mu * epsilon.sqrt() / (1.0 - mu));
                    let cap_id = 0.25;
                    let cap_rk = (mu / (1.0 - mu).sqrt()).min(1.0) / 4.0;
                    let sym_eta_id = (0.25 * sym_eta_sigma).min(cap_id);
                    let sym_eta_rk = (0.25 * sym_eta_sigma.min(sym_eta_mu)).min(cap_rk);
                    let rel = |a: f64, b: f64| (a - b).abs() / b.abs().max(1e-300);
                    ok &= rel(hp_id.eta, sym_eta_id) <= 1e-12;
                    ok &= rel(hp_rk.eta, sym_eta_rk) <= 1e-12;

                    let sym_t_id = (1.0 / (e2 * sym_eta_id)).ceil() as u64;
                    let sym_t_rk = (1.0 / (e2 * sym_eta_rk)).ceil() as u64;
                    ok &= hp_id.iters == sym_t_id && hp_rk.iters == sym_t_rk;

                    // total bits and the Table-1 improvement factor
                    let bits_id = hp_id.iters as f64 * (d as f64) * 64.0;
                    let bits_rk = hp_rk.iters as f64 * (k as f64) * 64.0;
                    let ratio = bits_id / bits_rk;
                    let t_ratio = hp_id.iters as f64 / hp_rk.iters as f64;
                    // ratio = (T_id/T_rk) * sqrt(alpha) eps^{-3/4} * (k_exact/k)
                    let theory =
                        t_ratio * alpha.sqrt() * epsilon.powf(-0.75) * (k_exact / k as f64);
                    ok &= rel(ratio, theory) <= 1e-9;
                    if alpha_is_d && d == 10_000 && epsilon == 0.01 {
                        details.push_str(&format!(
                            "d=1e4 eps=1e-2 alpha=d: k={k}, ratio {ratio:.1} = (T ratio {t_ratio:.3}) x sqrt(d) eps^-3/4 x rounding; "
                        ));
                    }
                }
            }
        }
        details.push_str("18 grid points exact");
        Ok((ok, details))
    })
}

/// Criterion 12: distributed equivalence. W=4 RandomK matches the
/// averaged-oracle single run to 1e-10, the ledger is exact, and W=1 is
/// bitwise identical to the single-process engine.
pub fn criterion_12_distributed_equivalence() -> CheckResult {
    check("12", "distributed-equivalence", 30.0, || {
        let d = 8;
        let spectrum: Vec<f64> = (0..d)
            .map(|i| 0.25 + 1.25 * i as f64 / (d - 1) as f64)
            .collect();
        let obj = Objective::quadratic(DenseMatrix::from_spectrum(&spectrum, Some(3)), 20.0)?;
        let sigma = 0.5;
        let spec = CompressorSpec::new(CompressorKind::RandomK { k: 2 }, d)?;
        let t = 500;
        let hp = HyperParams::manual(
            &spec,
            ManualParams {
                l: obj.l,
                sigma,
                eta: 0.01,
                noise_std: 0.3,
                iters: t,
                ..Default::default()
            },
        );
        let x0 = ParamVector::constant(d, 1.0);
        let oracles: Vec<StochasticOracle> = (0..4)
            .map(|_| StochasticOracle::new(obj.clone(), NoiseKind::AdditiveGaussian, sigma))
            .collect::<Result<_>>()?;

        let eq = equivalence_deviation(&oracles, &spec, &hp, 64, x0.clone(), 0xC12)?;
        let eq_ok = eq.max_x_rel_dev <= 1e-10 && eq.max_e_rel_dev <= 1e-10;

        let (_, ledger) = distributed_run(
            &oracles,
            &spec,
            &hp,
            &ClusterOptions::default(),
            x0.clone(),
            0xC12,
        )?;
        let expect_uplink = 4 * t * 2 * 64;
        let sum_up: u64 = ledger.entries.iter().map(|e| e.uplink_bits).sum();
        let ledger_ok =
            ledger.total_uplink_bits == expect_uplink && sum_up == ledger.total_uplink_bits;

        let single_oracle = oracles[0].clone();
        let single = run(
            &single_oracle,
            &spec,
            &hp,
            &RunOptions::default(),
            x0.clone(),
            0xC12,
        )?;
        let (one_worker, _) = distributed_run(
            &oracles[..1],
            &spec,
            &hp,
            &ClusterOptions::default(),
            x0,
            0xC12,
        )?;
        let bitwise_ok = single.csv_string() == one_worker.csv_string();

        Ok((
            eq_ok && ledger_ok && bitwise_ok,
            format!(
                "W=4 max dev x={:.1e} e={:.1e}; uplink bits {}={}; W=1 bitwise: {}",
                eq.max_x_rel_dev,
                eq.max_e_rel_dev,
                ledger.total_uplink_bits,
                expect_uplink,
                bitwise_ok
            ),
        ))
    })
}

pub fn run_all() -> Vec<CheckResult> {
    vec![
        criterion_01_compressor_contracts(),
        criterion_02_linearity(),
        criterion_03_corrected_iterate_identity(),
        criterion_04_error_bound(),
        criterion_05_descent_lemma(),
        criterion_06_fosp_at_desk_scale(),
        criterion_07_sosp_escape(),
        criterion_08_sosp_fraction(),
        criterion_09_coupling_growth(),
        criterion_10_beta_bounds(),
        criterion_11_communication_arithmetic(),
        criterion_12_distributed_equivalence(),
    ]
}

/// Compressor-verification battery used by the `verify-compressors`
/// subcommand: contraction table plus the linearity checks.
pub fn verify_compressors() -> Vec<CheckResult> {
    vec![
        criterion_01_compressor_contracts(),
        criterion_02_linearity(),
    ]
}
