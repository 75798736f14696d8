use super::*;
use crate::linalg::{purpose, stream_id};
use proptest::prelude::*;

fn rng(seed: u64) -> SeededRng {
    SeededRng::new(seed, 0)
}

fn vec2(data: &[f64]) -> ParamVector {
    ParamVector::from_vec(data.to_vec())
}

#[test]
fn random_k_equal_to_d_is_identity() {
    let spec = CompressorSpec::new(CompressorKind::RandomK { k: 4 }, 4).unwrap();
    let x = vec2(&[1.0, -2.0, 3.5, 0.0]);
    let (c, _) = compress(&spec, &x, &mut rng(3)).unwrap();
    assert_eq!(c, x);
}

#[test]
fn top_k_keeps_largest_magnitudes() {
    let spec = CompressorSpec::new(CompressorKind::TopK { k: 2 }, 5).unwrap();
    let x = vec2(&[3.0, -1.0, 4.0, 1.0, 5.0]);
    let (c, msg) = compress(&spec, &x, &mut rng(0)).unwrap();
    assert_eq!(c.as_slice(), &[0.0, 0.0, 4.0, 0.0, 5.0]);
    assert_eq!(msg.cost_bits, 2 * (64 + 3));
}

#[test]
fn top_k_tie_break_prefers_lower_index() {
    let spec = CompressorSpec::new(CompressorKind::TopK { k: 1 }, 3).unwrap();
    let x = vec2(&[2.0, -2.0, 2.0]);
    let (c, _) = compress(&spec, &x, &mut rng(0)).unwrap();
    assert_eq!(c.as_slice(), &[2.0, 0.0, 0.0]);
}

#[test]
fn sign_formula() {
    let spec = CompressorSpec::new(CompressorKind::Sign, 3).unwrap();
    let x = vec2(&[1.0, -2.0, 3.0]);
    let (c, msg) = compress(&spec, &x, &mut rng(0)).unwrap();
    assert_eq!(c.as_slice(), &[2.0, -2.0, 2.0]);
    assert_eq!(msg.cost_bits, 3 + 64);
}

#[test]
fn sign_and_quantization_of_zero_vector_are_zero() {
    let x = ParamVector::zeros(4);
    for kind in [CompressorKind::Sign, CompressorKind::Quantization { s: 1 }] {
        let spec = CompressorSpec::new(kind, 4).unwrap();
        let (c, _) = compress(&spec, &x, &mut rng(1)).unwrap();
        assert_eq!(c.as_slice(), &[0.0; 4], "{kind:?}");
    }
}

#[test]
fn quantization_s1_values_and_expectation() {
    // x = [3, 4]: ||x|| = 5, so c_1 in {0, 5} with P(5) = 3/5.
    let spec = CompressorSpec::new(CompressorKind::Quantization { s: 1 }, 2).unwrap();
    let x = vec2(&[3.0, 4.0]);
    let trials = 200_000;
    let mut sum0 = 0.0;
    let mut sum1 = 0.0;
    for t in 0..trials {
        let mut r = SeededRng::new(7, stream_id(&[purpose::TRIAL, t]));
        let (c, _) = compress(&spec, &x, &mut r).unwrap();
        assert!(c[0] == 0.0 || c[0] == 5.0, "c0 = {}", c[0]);
        assert!(c[1] == 0.0 || c[1] == 5.0);
        sum0 += c[0];
        sum1 += c[1];
    }
    let n = trials as f64;
    // std of c_0 is 5*sqrt(0.6*0.4) ~ 2.45; 4 sigma-hat band
    let band0 = 4.0 * 5.0 * (0.6f64 * 0.4).sqrt() / n.sqrt();
    let band1 = 4.0 * 5.0 * (0.8f64 * 0.2).sqrt() / n.sqrt();
    assert!((sum0 / n - 3.0).abs() < band0, "E[c0] = {}", sum0 / n);
    assert!((sum1 / n - 4.0).abs() < band1, "E[c1] = {}", sum1 / n);
}

#[test]
fn quantization_single_support_is_deterministic() {
    // |x_0| = ||x||: level is exactly s with up-probability zero.
    let spec = CompressorSpec::new(CompressorKind::Quantization { s: 1 }, 3).unwrap();
    let x = vec2(&[-2.0, 0.0, 0.0]);
    for seed in 0..20 {
        let (c, _) = compress(&spec, &x, &mut rng(seed)).unwrap();
        assert_eq!(c.as_slice(), &[-2.0, 0.0, 0.0]);
    }
}

#[test]
fn linearity_classification() {
    let d = 10;
    let cases = [
        (CompressorKind::Identity, true),
        (CompressorKind::RandomK { k: 3 }, true),
        (CompressorKind::TopK { k: 3 }, false),
        (CompressorKind::Sign, false),
        (CompressorKind::Quantization { s: 1 }, false),
    ];
    for (kind, linear) in cases {
        assert_eq!(
            CompressorSpec::new(kind, d).unwrap().is_linear(),
            linear,
            "{kind:?}"
        );
    }
}

#[test]
fn mu_values() {
    let d = 100;
    let mu = |kind| CompressorSpec::new(kind, d).unwrap().mu();
    assert_eq!(mu(CompressorKind::Identity), Some(1.0));
    assert_eq!(mu(CompressorKind::RandomK { k: 10 }), Some(0.1));
    assert_eq!(mu(CompressorKind::TopK { k: 10 }), Some(0.1));
    assert_eq!(mu(CompressorKind::Sign), Some(0.01));
    assert_eq!(mu(CompressorKind::Quantization { s: 1 }), None);
}

#[test]
fn static_message_costs() {
    let cost = |kind, d| CompressorSpec::new(kind, d).unwrap().message_cost_bits(64);
    assert_eq!(cost(CompressorKind::Identity, 100), Some(6400));
    assert_eq!(cost(CompressorKind::RandomK { k: 5 }, 100), Some(320));
    assert_eq!(cost(CompressorKind::TopK { k: 5 }, 100), Some(5 * (64 + 7)));
    assert_eq!(cost(CompressorKind::Sign, 100), Some(164));
    assert_eq!(cost(CompressorKind::Quantization { s: 1 }, 100), None);
}

#[test]
fn random_k_linearity_at_fixed_draw() {
    let d = 20;
    let spec = CompressorSpec::new(CompressorKind::RandomK { k: 6 }, d).unwrap();
    let mut r = rng(11);
    for _ in 0..100 {
        let draw = spec.draw(&mut r);
        let x = r.standard_normal_vector(d);
        let y = r.standard_normal_vector(d);
        let a = 4.0 * r.uniform_f64() - 2.0;
        let b = 4.0 * r.uniform_f64() - 2.0;
        let (cx, _) = compress_with(&spec, &x, &draw, 64).unwrap();
        let (cy, _) = compress_with(&spec, &y, &draw, 64).unwrap();
        let combined = x.scale(a).add(&y.scale(b));
        let (cc, _) = compress_with(&spec, &combined, &draw, 64).unwrap();
        let expect = cx.scale(a).add(&cy.scale(b));
        let err = cc.sub(&expect).norm();
        assert!(
            err <= 1e-12 * (1.0 + expect.norm()),
            "linearity violated: {err:e}"
        );
    }
}

#[test]
fn identity_contraction_is_exact_zero() {
    let spec = CompressorSpec::new(CompressorKind::Identity, 8).unwrap();
    let est =
        compression_factor_estimate(&spec, |r| r.standard_normal_vector(8), 100, &rng(5)).unwrap();
    assert_eq!(est.ratio, 0.0);
    assert_eq!(est.zero_trials, 0);
}

#[test]
fn random_k_contraction_matches_one_minus_mu() {
    // Oracle: for coordinate-exchangeable inputs E ratio = 1 - k/d.
    let spec = CompressorSpec::new(CompressorKind::RandomK { k: 10 }, 100).unwrap();
    let est =
        compression_factor_estimate(&spec, |r| r.standard_normal_vector(100), 20_000, &rng(6))
            .unwrap();
    assert!((est.ratio - 0.9).abs() < 0.01, "ratio {}", est.ratio);
}

#[test]
fn degenerate_sampler_trials_counted() {
    let spec = CompressorSpec::new(CompressorKind::Sign, 4).unwrap();
    let est = compression_factor_estimate(
        &spec,
        |r| {
            if r.uniform_f64() < 0.5 {
                ParamVector::zeros(4)
            } else {
                ParamVector::constant(4, 1.0)
            }
        },
        1000,
        &rng(7),
    )
    .unwrap();
    assert!(est.zero_trials > 300 && est.zero_trials < 700);
    assert_eq!(est.used_trials + est.zero_trials, 1000);
}

#[test]
fn wire_round_trip_all_kinds() {
    let d = 13;
    let kinds = [
        CompressorKind::Identity,
        CompressorKind::RandomK { k: 4 },
        CompressorKind::TopK { k: 4 },
        CompressorKind::Sign,
        CompressorKind::Quantization { s: 1 },
        CompressorKind::Quantization { s: 4 },
    ];
    let mut r = rng(8);
    for kind in kinds {
        let spec = CompressorSpec::new(kind, d).unwrap();
        let x = r.standard_normal_vector(d);
        let draw = spec.draw(&mut r);
        let (c, msg) = compress_with(&spec, &x, &draw, 64).unwrap();
        let bytes = msg.to_bytes();
        let parsed = CompressedMessage::from_bytes(&bytes).unwrap();
        assert_eq!(parsed, msg, "{kind:?}");
        let c2 = parsed.decode(&spec, &draw).unwrap();
        for i in 0..d {
            assert_eq!(c[i].to_bits(), c2[i].to_bits(), "{kind:?} coord {i}");
        }
    }
}

#[test]
fn value_bits_32_round_trips_exactly() {
    let spec = CompressorSpec::new(CompressorKind::TopK { k: 2 }, 6).unwrap();
    let mut r = rng(9);
    let x = r.standard_normal_vector(6);
    let (c, msg) = compress_with(&spec, &x, &CompressorDraw::None, 32).unwrap();
    let parsed = CompressedMessage::from_bytes(&msg.to_bytes()).unwrap();
    let c2 = parsed.decode(&spec, &CompressorDraw::None).unwrap();
    for i in 0..6 {
        assert_eq!(c[i].to_bits(), c2[i].to_bits());
        assert_eq!(c[i], c[i] as f32 as f64);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn prop_top_k_idempotent(values in prop::collection::vec(-100.0f64..100.0, 3..20), k in 1usize..4) {
        let d = values.len();
        let k = k.min(d);
        let spec = CompressorSpec::new(CompressorKind::TopK { k }, d).unwrap();
        let x = ParamVector::from_vec(values);
        let (c1, _) = compress_with(&spec, &x, &CompressorDraw::None, 64).unwrap();
        let (c2, _) = compress_with(&spec, &c1, &CompressorDraw::None, 64).unwrap();
        prop_assert_eq!(c1, c2);
    }

    #[test]
    fn prop_random_k_same_draw_idempotent(seed in 0u64..1000, d in 2usize..20) {
        let k = 1 + (seed as usize % d);
        let spec = CompressorSpec::new(CompressorKind::RandomK { k }, d).unwrap();
        let mut r = SeededRng::new(seed, 0);
        let draw = spec.draw(&mut r);
        let x = r.standard_normal_vector(d);
        let (c1, _) = compress_with(&spec, &x, &draw, 64).unwrap();
        let (c2, _) = compress_with(&spec, &c1, &draw, 64).unwrap();
        prop_assert_eq!(c1, c2);
    }

    #[test]
    fn prop_contraction_pathwise_for_deterministic_kinds(
        values in prop::collection::vec(-50.0f64..50.0, 2..16),
    ) {
        // TopK and Sign satisfy the contraction inequality for every input,
        // not just in expectation.
        let d = values.len();
        let x = ParamVector::from_vec(values);
        prop_assume!(x.norm_sq() > 1e-12);
        for kind in [CompressorKind::TopK { k: 1 }, CompressorKind::Sign] {
            let spec = CompressorSpec::new(kind, d).unwrap();
            let (c, _) = compress_with(&spec, &x, &CompressorDraw::None, 64).unwrap();
            let mu = spec.mu().unwrap();
            let ratio = x.sub(&c).norm_sq() / x.norm_sq();
            prop_assert!(ratio <= (1.0 - mu) + 1e-12, "{:?}: ratio {} mu {}", kind, ratio, mu);
        }
    }

    #[test]
    fn prop_codec_round_trip(seed in 0u64..500) {
        let d = 2 + (seed as usize % 30);
        let mut r = SeededRng::new(seed, 1);
        let kinds = [
            CompressorKind::Identity,
            CompressorKind::RandomK { k: 1 + seed as usize % d },
            CompressorKind::TopK { k: 1 + seed as usize % d },
            CompressorKind::Sign,
            CompressorKind::Quantization { s: 1 },
        ];
        for kind in kinds {
            let spec = CompressorSpec::new(kind, d).unwrap();
            let x = r.standard_normal_vector(d);
            let draw = spec.draw(&mut r);
            let (c, msg) = compress_with(&spec, &x, &draw, 64).unwrap();
            let parsed = CompressedMessage::from_bytes(&msg.to_bytes()).unwrap();
            let c2 = parsed.decode(&spec, &draw).unwrap();
            for i in 0..d {
                prop_assert_eq!(c[i].to_bits(), c2[i].to_bits());
            }
        }
    }
}
