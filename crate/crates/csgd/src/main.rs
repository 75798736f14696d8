//! Command-line harness: plan, run, escape, coupling, verify-compressors,
//! and the full acceptance suite.
//!
//! Exit code 0 if and only if every asserted threshold of the chosen
//! subcommand passed; failures are also written as machine-readable JSON.

use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use serde::Serialize;

use csgd::analysis::{coupling_experiment, escape_experiment, CouplingExperimentConfig};
use csgd::cluster::{distributed_run, ClusterOptions};
use csgd::compressors::CompressorKind;
use csgd::config::RunConfig;
use csgd::error::Result;
use csgd::optimizer::{plan, run, suggested_random_k, HyperParams, RunOptions};
use csgd::suite;
use csgd::trace::fmt_f64;
use csgd::{compressors::CompressorSpec, trace::RunTrace};

#[derive(Parser)]
#[command(
    name = "csgd",
    about = "Perturbed compressed SGD with error feedback",
    version
)]
struct Cli {
    /// Worker-thread count for seed sweeps (defaults to the rayon default).
    #[arg(long, global = true)]
    threads: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Print the planned hyperparameters and predicted communication.
    Plan {
        #[arg(long)]
        config: PathBuf,
    },
    /// Execute runs (single-process or simulated cluster) and write traces.
    Run {
        #[arg(long)]
        config: PathBuf,
        /// Override the config root seed.
        #[arg(long)]
        seed: Option<u64>,
        /// Override the number of sweep seeds.
        #[arg(long)]
        seeds_count: Option<usize>,
        /// Output directory (default: config output.dir, else "out").
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Saddle-escape experiment: fraction of seeds whose objective drops
    /// by F within the escape budget.
    Escape {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        seeds_count: Option<usize>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Coupled-pair diagnostics from a strict saddle.
    Coupling {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        seeds_count: Option<usize>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Contraction-factor and linearity battery for all compressor kinds.
    VerifyCompressors {
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Full acceptance battery.
    Suite {
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

#[derive(Debug, Serialize)]
struct Failure {
    check: String,
    detail: String,
}

fn out_dir(cfg: Option<&RunConfig>, flag: Option<PathBuf>) -> PathBuf {
    flag.or_else(|| cfg.and_then(|c| c.output.dir.as_ref().map(PathBuf::from)))
        .unwrap_or_else(|| PathBuf::from("out"))
}

fn write_failures(dir: &Path, failures: &[Failure]) -> Result<()> {
    fs::create_dir_all(dir)?;
    let json = serde_json::to_string_pretty(failures).expect("serializable");
    fs::write(dir.join("failures.json"), json)?;
    Ok(())
}

fn finish(dir: &Path, failures: Vec<Failure>) -> Result<ExitCode> {
    write_failures(dir, &failures)?;
    if failures.is_empty() {
        Ok(ExitCode::SUCCESS)
    } else {
        for f in &failures {
            eprintln!("FAIL {}: {}", f.check, f.detail);
        }
        Ok(ExitCode::FAILURE)
    }
}

#[derive(Serialize)]
struct PlanReport {
    hyperparams: HyperParams,
    per_round_bits_per_worker: u64,
    predicted_total_bits_per_worker: f64,
    identity_total_bits_per_worker: f64,
    improvement_ratio_vs_identity: f64,
    suggested_random_k: usize,
}

fn cmd_plan(config: &Path) -> Result<ExitCode> {
    let cfg = RunConfig::from_path(config)?;
    let spec = cfg.compressor_spec()?;
    let hp = cfg.plan()?;
    let inputs = cfg.plan_inputs()?;
    let vb = cfg.compressor.value_bits;

    let per_round = spec
        .message_cost_bits(vb)
        .expect("planner rejects content-dependent costs");
    let total = hp.iters as f64 * per_round as f64;
    let id_spec = CompressorSpec::new(CompressorKind::Identity, spec.d)?;
    let hp_id = plan(&inputs, &id_spec, &cfg.plan_constants())?;
    let id_total = hp_id.iters as f64 * id_spec.message_cost_bits(vb).unwrap() as f64;
    let report = PlanReport {
        per_round_bits_per_worker: per_round,
        predicted_total_bits_per_worker: total,
        identity_total_bits_per_worker: id_total,
        improvement_ratio_vs_identity: id_total / total,
        suggested_random_k: suggested_random_k(spec.d, hp.epsilon, hp.alpha),
        hyperparams: hp,
    };
    let hp = &report.hyperparams;
    println!("eta                 = {}", fmt_f64(hp.eta));
    println!("I (escape iters)    = {}", fmt_f64(hp.escape_iters));
    println!("R (escape radius)   = {}", fmt_f64(hp.escape_radius));
    println!("F (escape decrease) = {}", fmt_f64(hp.escape_decrease));
    println!("r (noise std)       = {}", fmt_f64(hp.noise_std));
    println!("chi^2               = {}", fmt_f64(hp.chi_sq));
    println!("T (iterations)      = {}", hp.iters);
    println!("mu                  = {}", fmt_f64(hp.mu));
    println!("suggested RandomK k = {}", report.suggested_random_k);
    println!(
        "predicted bits/worker = {} ({} per round)",
        report.predicted_total_bits_per_worker, report.per_round_bits_per_worker
    );
    println!(
        "improvement vs identity = {:.3}",
        report.improvement_ratio_vs_identity
    );
    println!(
        "{}",
        serde_json::to_string_pretty(&report).expect("serializable")
    );
    Ok(ExitCode::SUCCESS)
}

#[derive(Serialize)]
struct SeedSummary {
    seed_index: u64,
    seed: u64,
    final_t: u64,
    final_f: f64,
    final_grad_norm: f64,
    total_bits: u64,
    reset_count: u64,
    max_y_identity_rel_err: f64,
    best_checkpoint_t: Option<u64>,
    best_checkpoint_f: Option<f64>,
    checkpoints: Vec<csgd::trace::Checkpoint>,
}

#[derive(Serialize)]
struct RunSummary {
    hyperparams: HyperParams,
    workers: usize,
    reset_error: bool,
    seeds: Vec<SeedSummary>,
}

fn cmd_run(
    config: &Path,
    seed_override: Option<u64>,
    seeds_count: Option<usize>,
    out: Option<PathBuf>,
) -> Result<ExitCode> {
    let mut cfg = RunConfig::from_path(config)?;
    if let Some(s) = seed_override {
        cfg.seed = s;
    }
    if let Some(n) = seeds_count {
        cfg.execution.seeds_count = n;
    }
    let dir = out_dir(Some(&cfg), out);
    fs::create_dir_all(&dir)?;

    let hp = cfg.plan()?;
    let spec = cfg.compressor_spec()?;
    let obj = cfg.objective()?;
    let mut failures = Vec::new();
    let mut summaries = Vec::new();

    for s in 0..cfg.execution.seeds_count as u64 {
        let seed = cfg.run_seed(s);
        let x0 = cfg.x0(s)?;
        let trace: RunTrace = if cfg.execution.workers == 1 {
            let oracle = cfg.oracle()?;
            let opts = RunOptions {
                reset_error: cfg.execution.reset_error,
                value_bits: cfg.compressor.value_bits,
                record_every: cfg.execution.record_every,
            };
            run(&oracle, &spec, &hp, &opts, x0, seed)?
        } else {
            let oracles = cfg.oracles()?;
            let opts = ClusterOptions {
                reset_error: cfg.execution.reset_error,
                value_bits: cfg.compressor.value_bits,
                record_every: cfg.execution.record_every,
                compress_downlink: cfg.execution.compress_downlink,
            };
            let (trace, ledger) = distributed_run(&oracles, &spec, &hp, &opts, x0, seed)?;
            fs::write(dir.join(format!("ledger_seed{s}.csv")), ledger.csv_string())?;
            trace
        };
        fs::write(dir.join(format!("trace_seed{s}.csv")), trace.csv_string())?;
        if trace.max_y_identity_rel_err > 1e-10 {
            failures.push(Failure {
                check: format!("corrected-iterate identity (seed {s})"),
                detail: format!(
                    "relative error {} exceeds 1e-10",
                    trace.max_y_identity_rel_err
                ),
            });
        }
        let best = trace
            .checkpoints
            .iter()
            .map(|c| (c.t, obj.value(&c.point)))
            .filter_map(|(t, f)| f.ok().map(|f| (t, f)))
            .min_by(|a, b| a.1.partial_cmp(&b.1).unwrap());
        summaries.push(SeedSummary {
            seed_index: s,
            seed,
            final_t: trace.final_t,
            final_f: trace.final_f,
            final_grad_norm: trace.final_grad_norm,
            total_bits: trace.total_bits,
            reset_count: trace.reset_count,
            max_y_identity_rel_err: trace.max_y_identity_rel_err,
            best_checkpoint_t: best.map(|b| b.0),
            best_checkpoint_f: best.map(|b| b.1),
            checkpoints: trace.checkpoints,
        });
    }
    let summary = RunSummary {
        hyperparams: hp,
        workers: cfg.execution.workers,
        reset_error: cfg.execution.reset_error,
        seeds: summaries,
    };
    fs::write(
        dir.join("summary.json"),
        serde_json::to_string_pretty(&summary).expect("serializable"),
    )?;
    println!(
        "wrote {} trace(s) to {}",
        cfg.execution.seeds_count,
        dir.display()
    );
    finish(&dir, failures)
}

fn cmd_escape(
    config: &Path,
    seed_override: Option<u64>,
    seeds_count: Option<usize>,
    out: Option<PathBuf>,
) -> Result<ExitCode> {
    let mut cfg = RunConfig::from_path(config)?;
    if let Some(s) = seed_override {
        cfg.seed = s;
    }
    let n_seeds = seeds_count.unwrap_or(cfg.execution.seeds_count.max(50));
    let dir = out_dir(Some(&cfg), out);
    fs::create_dir_all(&dir)?;

    let hp = cfg.plan()?;
    let spec = cfg.compressor_spec()?;
    let oracle = cfg.oracle()?;
    let x0 = cfg.x0(0)?;
    let report = escape_experiment(
        &oracle,
        &spec,
        &hp,
        cfg.execution.reset_error,
        &x0,
        cfg.seed,
        n_seeds,
    )?;
    fs::write(
        dir.join("escape.json"),
        serde_json::to_string_pretty(&report).expect("serializable"),
    )?;
    println!(
        "escape rate {:.3} over {} seeds (budget {} iters, threshold f < {})",
        report.success_rate,
        n_seeds,
        report.budget,
        fmt_f64(report.threshold)
    );
    let mut failures = Vec::new();
    if report.success_rate < 0.9 {
        failures.push(Failure {
            check: "escape rate".into(),
            detail: format!("{:.3} < 0.9", report.success_rate),
        });
    }
    finish(&dir, failures)
}

fn cmd_coupling(
    config: &Path,
    seed_override: Option<u64>,
    seeds_count: Option<usize>,
    out: Option<PathBuf>,
) -> Result<ExitCode> {
    let mut cfg = RunConfig::from_path(config)?;
    if let Some(s) = seed_override {
        cfg.seed = s;
    }
    let dir = out_dir(Some(&cfg), out);
    fs::create_dir_all(&dir)?;

    let hp = cfg.plan()?;
    let spec = cfg.compressor_spec()?;
    let oracle = cfg.oracle()?;
    let x0 = cfg.x0(0)?;
    let exp_cfg = CouplingExperimentConfig {
        seeds: seeds_count.unwrap_or(cfg.execution.seeds_count.max(200)),
        base_seed: cfg.seed,
        t_max: cfg.execution.t_override,
        value_bits: cfg.compressor.value_bits,
    };
    let diag = coupling_experiment(&oracle, &spec, &hp, &x0, &exp_cfg)?;
    fs::write(dir.join("coupling.csv"), diag.csv_string())?;
    fs::write(
        dir.join("coupling.json"),
        serde_json::to_string_pretty(&diag).expect("serializable"),
    )?;

    let mut failures = Vec::new();
    let target = (1.0 + hp.eta * diag.gamma).ln();
    match diag.fit_growth_rate(hp.escape_radius) {
        Ok((slope, w0, w1)) => {
            println!(
                "growth rate {slope:.6} vs ln(1+eta*gamma) = {target:.6} over window [{w0}, {w1})"
            );
            if (slope - target).abs() > 0.1 * target {
                failures.push(Failure {
                    check: "growth rate".into(),
                    detail: format!("slope {slope} not within 10% of {target}"),
                });
            }
        }
        Err(e) => failures.push(Failure {
            check: "growth window".into(),
            detail: e.to_string(),
        }),
    }
    let (ks_d, ks_p) = diag.ks_end_values();
    println!("distribution equality: KS D = {ks_d:.4}, p = {ks_p:.4}");
    if ks_p <= 0.01 {
        failures.push(Failure {
            check: "KS distribution equality".into(),
            detail: format!("p = {ks_p} <= 0.01"),
        });
    }
    if diag.max_bookkeeping_rel > 1e-10 {
        failures.push(Failure {
            check: "coupling bookkeeping".into(),
            detail: format!("{} > 1e-10", diag.max_bookkeeping_rel),
        });
    }
    finish(&dir, failures)
}

fn cmd_verify_compressors(config: Option<PathBuf>, out: Option<PathBuf>) -> Result<ExitCode> {
    let cfg = match &config {
        Some(p) => Some(RunConfig::from_path(p)?),
        None => None,
    };
    let dir = out_dir(cfg.as_ref(), out);
    fs::create_dir_all(&dir)?;
    let results = suite::verify_compressors();
    let mut failures = Vec::new();
    let mut table = String::from("check,passed,details\n");
    for r in &results {
        println!("{}", r.line());
        table.push_str(&format!(
            "{},{},{}\n",
            r.name,
            r.passed,
            r.details.replace(',', ";")
        ));
        if !r.passed {
            failures.push(Failure {
                check: r.name.to_string(),
                detail: r.details.clone(),
            });
        }
    }
    fs::write(dir.join("compressor_checks.csv"), table)?;
    finish(&dir, failures)
}

fn cmd_suite(out: Option<PathBuf>) -> Result<ExitCode> {
    let dir = out_dir(None, out);
    fs::create_dir_all(&dir)?;
    let results = suite::run_all();
    let mut failures = Vec::new();
    for r in &results {
        println!("{}", r.line());
        if !r.passed {
            failures.push(Failure {
                check: format!("criterion {}: {}", r.id, r.name),
                detail: r.details.clone(),
            });
        }
    }
    fs::write(
        dir.join("suite.json"),
        serde_json::to_string_pretty(&results).expect("serializable"),
    )?;
    finish(&dir, failures)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    #[cfg(feature = "parallel")]
    if let Some(n) = cli.threads {
        let _ = rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global();
    }
    #[cfg(not(feature = "parallel"))]
    let _ = cli.threads;

    let result = match cli.command {
        Command::Plan { config } => cmd_plan(&config),
        Command::Run {
            config,
            seed,
            seeds_count,
            out,
        } => cmd_run(&config, seed, seeds_count, out),
        Command::Escape {
            config,
            seed,
            seeds_count,
            out,
        } => cmd_escape(&config, seed, seeds_count, out),
        Command::Coupling {
            config,
            seed,
            seeds_count,
            out,
        } => cmd_coupling(&config, seed, seeds_count, out),
        Command::VerifyCompressors { config, out } => cmd_verify_compressors(config, out),
        Command::Suite { out } => cmd_suite(out),
    };
    match result {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}
