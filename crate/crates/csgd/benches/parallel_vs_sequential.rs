//! Criterion benchmarks comparing the rayon data-parallel seed sweeps
//! against the always-sequential fallback.
//!
//! Run with `cargo bench`. Building with `--no-default-features` measures
//! the sequential path only (both entries then coincide).

use criterion::{criterion_group, criterion_main, Criterion};
use std::hint::black_box;

use csgd::compressors::{compress, compression_factor_estimate, CompressorKind, CompressorSpec};
use csgd::linalg::{purpose, stream_id, ParamVector, SeededRng};
use csgd::objectives::{NoiseKind, Objective, StochasticOracle};
use csgd::optimizer::{run, HyperParams, ManualParams, RunOptions};
use csgd::parallel::{map_indexed, map_indexed_seq};

fn escape_sweep_setup() -> (StochasticOracle, CompressorSpec, HyperParams, ParamVector) {
    let d = 10;
    let obj = Objective::double_well(d, 1.25).unwrap();
    let oracle = StochasticOracle::new(obj, NoiseKind::AdditiveGaussian, 0.0).unwrap();
    let spec = CompressorSpec::new(CompressorKind::RandomK { k: 2 }, d).unwrap();
    let hp = HyperParams::manual(
        &spec,
        ManualParams {
            l: 3.6875,
            rho: 7.5,
            eta: 8e-4,
            noise_std: 1.4,
            iters: 2000,
            ..Default::default()
        },
    );
    (oracle, spec, hp, ParamVector::zeros(d))
}

fn bench_seed_sweep(c: &mut Criterion) {
    let (oracle, spec, hp, x0) = escape_sweep_setup();
    let opts = RunOptions {
        reset_error: false,
        value_bits: 64,
        record_every: u64::MAX,
    };
    let seeds = 16usize;
    let run_one = |s: usize| {
        let seed = stream_id(&[purpose::SWEEP, 0xBE, s as u64]);
        run(&oracle, &spec, &hp, &opts, x0.clone(), seed)
            .unwrap()
            .final_f
    };

    let mut group = c.benchmark_group("seed_sweep_16x2000");
    group.sample_size(10);
    group.bench_function("parallel", |b| {
        b.iter(|| black_box(map_indexed(seeds, run_one)))
    });
    group.bench_function("sequential", |b| {
        b.iter(|| black_box(map_indexed_seq(seeds, run_one)))
    });
    group.finish();
}

fn bench_contraction_estimate(c: &mut Criterion) {
    let d = 100;
    let spec = CompressorSpec::new(CompressorKind::TopK { k: 10 }, d).unwrap();
    let trials = 20_000;

    let mut group = c.benchmark_group("contraction_topk_20k");
    group.sample_size(10);
    group.bench_function("parallel", |b| {
        b.iter(|| {
            compression_factor_estimate(
                &spec,
                |r| r.standard_normal_vector(d),
                trials,
                &SeededRng::new(1, 0),
            )
            .unwrap()
            .ratio
        })
    });
    group.bench_function("sequential", |b| {
        b.iter(|| {
            // same estimator body, forced onto one index at a time
            let ratios = map_indexed_seq(trials, |i| {
                let mut rng = SeededRng::new(1, 0).derive(&[purpose::TRIAL, i as u64]);
                let x = rng.standard_normal_vector(d);
                let (cv, _) = compress(&spec, &x, &mut rng).unwrap();
                x.sub(&cv).norm_sq() / x.norm_sq()
            });
            ratios.iter().sum::<f64>() / trials as f64
        })
    });
    group.finish();
}

criterion_group!(benches, bench_seed_sweep, bench_contraction_estimate);
criterion_main!(benches);
