//! Streaming state and weight updates against brute-force loop nests.
#![allow(clippy::needless_range_loop)]

mod common;

use common::*;
use mcanc::algorithms::{aposteriori_residual, mcfxlms_update, mnfxlms_update, momentum_update};
use mcanc::model::{ControlFilterBank, FilteredReferenceState, SystemDims};
use proptest::prelude::*;
use rand::Rng;

#[test]
fn filtered_reference_matches_direct_convolution() {
    let mut worst = 0.0f64;
    for seed in 0..40 {
        let mut rng = rng(seed);
        let d = random_dims(&mut rng);
        let s_hat: Vec<_> = (0..d.errors * d.sources).map(|_| random_ir(&mut rng, d.path_taps)).collect();
        let steps = rng.gen_range(1..150);
        let x: Vec<Vec<f64>> = (0..d.refs).map(|_| random_vec(&mut rng, steps, 1.0)).collect();
        let mut state = FilteredReferenceState::new(&d);
        for n in 0..steps {
            let sample: Vec<f64> = x.iter().map(|c| c[n]).collect();
            state.push_reference(&sample, &s_hat).unwrap();
        }
        for j in 0..d.refs {
            for k in 0..d.sources {
                for m in 0..d.errors {
                    let oracle = convolve(s_hat[d.path_index(m, k)].taps(), &x[j]);
                    let line = state.line(j, k, m).as_slice();
                    for (t, &v) in line.iter().enumerate() {
                        let expected = delayed(&oracle, steps - 1, t);
                        worst = worst.max((v - expected).abs());
                    }
                }
            }
        }
    }
    assert!(worst <= 1e-10, "max abs error {worst:e}");
}

#[test]
fn updates_match_loop_nests_bit_for_bit() {
    for seed in 0..60 {
        let mut rng = rng(1000 + seed);
        let d = random_dims(&mut rng);
        let s_hat: Vec<_> = (0..d.errors * d.sources).map(|_| random_ir(&mut rng, d.path_taps)).collect();
        let mut state = FilteredReferenceState::new(&d);
        for _ in 0..rng.gen_range(1..40) {
            state.push_reference(&random_vec(&mut rng, d.refs, 1.0), &s_hat).unwrap();
        }
        let lines = lines_of(&state);
        let e = random_vec(&mut rng, d.errors, 1.0);
        let start = random_bank(&mut rng, &d);
        let mu = rng.gen_range(1e-4..0.5);
        let gamma = rng.gen_range(0.0..0.99);
        let eps = 1e-6;
        let p: Vec<f64> = state.powers().to_vec();

        let mut bank = start.clone();
        mcfxlms_update(&mut bank, &state, &e, mu).unwrap();
        let mut oracle = bank_of(&start, &d);
        naive_update(&d, &mut oracle, &lines, &e, |_, em| mu * em, None);
        assert_eq!(bank_of(&bank, &d), oracle, "mcfxlms seed {seed}");

        let mut bank = start.clone();
        mnfxlms_update(&mut bank, &state, &e, mu, eps).unwrap();
        let mut oracle = bank_of(&start, &d);
        naive_update(&d, &mut oracle, &lines, &e, |m, em| mu * em / (p[m] + eps), None);
        assert_eq!(bank_of(&bank, &d), oracle, "mnfxlms seed {seed}");

        let mut bank = start.clone();
        momentum_update(&mut bank, &state, &e, mu, gamma, eps).unwrap();
        let mut oracle = bank_of(&start, &d);
        naive_update(&d, &mut oracle, &lines, &e, |m, em| mu * em / (p[m] + eps), Some(gamma));
        assert_eq!(bank_of(&bank, &d), oracle, "momentum seed {seed}");
    }
}

#[test]
fn running_power_tracks_direct_sum() {
    let mut rng = rng(7);
    let d = SystemDims::new(2, 2, 2, 16, 8).unwrap();
    let s_hat: Vec<_> = (0..4).map(|_| random_ir(&mut rng, 8)).collect();
    let mut state = FilteredReferenceState::new(&d);
    for n in 0..5000 {
        // bursts of very different scale stress the subtract-expired path
        let scale = if (n / 300) % 2 == 0 { 1e3 } else { 1e-2 };
        state.push_reference(&random_vec(&mut rng, 2, scale), &s_hat).unwrap();
        let lines = lines_of(&state);
        for m in 0..d.errors {
            let direct = naive_power(&d, &lines, m);
            let rel = (state.power(m) - direct).abs() / direct;
            assert!(rel <= 1e-8, "n={n} m={m} rel={rel:e}");
        }
    }
}

#[test]
fn closed_loop_matches_naive_simulation() {
    use mcanc::scenarios::PathSpec;
    use mcanc::signal;
    use mcanc::sim::run_with_source;
    use mcanc::{AlgorithmConfig, Scenario};

    let d = SystemDims::new(2, 2, 2, 8, 40).unwrap();
    let mut spec = PathSpec::new(&d, 5);
    spec.primary_delay = 6;
    let mut paths = spec.synthesize().unwrap();
    // give the second reference its own colouring
    paths.reference[1] = mcanc::ImpulseResponse::new(vec![0.5, -0.3, 0.2], 16000.0).unwrap();
    let noise = mcanc::scenarios::two_segment_broadband(0.05, 3, 16000.0).unwrap();
    let source = signal::generate(&noise).unwrap();

    let (mu, gamma, eps) = (0.01, 0.8, 1e-6);
    for alg in [
        AlgorithmConfig::mcfxlms(1e-4),
        AlgorithmConfig::mnfxlms(mu, eps),
        AlgorithmConfig::momentum_mnfxlms(mu, gamma, eps),
    ] {
        let scenario = Scenario::new(d, paths.clone(), noise.clone(), alg).unwrap();
        let fast = run_with_source(&scenario, &source).unwrap();
        assert!(!fast.diverged(), "{} diverged", alg.kind);
        let naive = naive_closed_loop(
            &d,
            &source,
            &paths.reference,
            &paths.primary,
            &paths.secondary_true,
            &paths.secondary_estimate,
            |bank, lines, e| {
                let coef = |m: usize, em: f64| {
                    if alg.kind.is_normalized() {
                        alg.step_size * em / (naive_power(&d, lines, m) + alg.epsilon)
                    } else {
                        alg.step_size * em
                    }
                };
                let g = (alg.kind == mcanc::AlgorithmKind::MomentumMnFxLms).then_some(alg.forgetting_factor);
                naive_update(&d, bank, lines, e, coef, g);
            },
        );
        for m in 0..d.errors {
            let diff = max_abs_diff(&fast.error_history[m], &naive[m]);
            assert!(diff <= 1e-9, "{} mic {m}: {diff:e}", alg.kind);
        }
    }
}

#[test]
fn aposteriori_residual_vanishes_for_unit_normalized_step() {
    for seed in 0..20 {
        let mut rng = rng(500 + seed);
        let d = SystemDims::new(rng.gen_range(1..=3), rng.gen_range(1..=3), 1, rng.gen_range(1..=16), 16).unwrap();
        let s_hat: Vec<_> = (0..d.sources).map(|_| random_ir(&mut rng, 16)).collect();
        let mut state = FilteredReferenceState::new(&d);
        let mut bank = ControlFilterBank::new(&d);
        for n in 0..50 {
            state.push_reference(&random_vec(&mut rng, d.refs, 1.0), &s_hat).unwrap();
            let dist = [rng.gen_range(0.5..1.5) * if rng.gen() { 1.0 } else { -1.0 }];
            let e = aposteriori_residual(&bank, &state, &dist).unwrap();
            mnfxlms_update(&mut bank, &state, &e, 1.0, 0.0).unwrap();
            let r = aposteriori_residual(&bank, &state, &dist).unwrap();
            assert!(r[0].abs() <= 1e-9 * dist[0].abs(), "seed {seed} n {n}: {:e}", r[0]);
        }
    }
}

#[test]
fn half_step_halves_the_residual() {
    let mut rng = rng(77);
    let d = SystemDims::new(2, 3, 1, 12, 16).unwrap();
    let s_hat: Vec<_> = (0..3).map(|_| random_ir(&mut rng, 16)).collect();
    let mut state = FilteredReferenceState::new(&d);
    for _ in 0..30 {
        state.push_reference(&random_vec(&mut rng, 2, 1.0), &s_hat).unwrap();
    }
    let mut bank = random_bank(&mut rng, &d);
    let dist = [0.7];
    let apriori = aposteriori_residual(&bank, &state, &dist).unwrap()[0];
    mnfxlms_update(&mut bank, &state, &[apriori], 0.5, 0.0).unwrap();
    let after = aposteriori_residual(&bank, &state, &dist).unwrap()[0];
    assert!((after - 0.5 * apriori).abs() <= 1e-9 * apriori.abs(), "{after} vs {apriori}");
}

proptest! {
    #[test]
    fn delay_line_shifts_by_one(samples in prop::collection::vec(-1e6f64..1e6, 1..200), len in 1usize..32) {
        let mut line = mcanc::TapDelayLine::new(len);
        let mut history: Vec<f64> = Vec::new();
        for &s in &samples {
            let before = line.as_slice().to_vec();
            let expired = line.push(s);
            prop_assert_eq!(expired, before[len - 1]);
            prop_assert_eq!(line[0], s);
            prop_assert_eq!(&line.as_slice()[1..], &before[..len - 1]);
            history.push(s);
        }
        for t in 0..len {
            prop_assert_eq!(line[t], delayed(&history, history.len() - 1, t));
        }
    }

    #[test]
    fn normalized_update_is_scale_free(c in 0.01f64..100.0, seed in 0u64..1000) {
        // scaling every filtered reference by c scales the update by 1/c
        let mut rng = rng(seed);
        let d = SystemDims::new(1, 2, 2, 6, 4).unwrap();
        let s_hat: Vec<_> = (0..4).map(|_| random_ir(&mut rng, 4)).collect();
        let xs: Vec<Vec<f64>> = (0..10).map(|_| random_vec(&mut rng, 1, 1.0)).collect();
        let e = random_vec(&mut rng, 2, 1.0);
        let mut a = FilteredReferenceState::new(&d);
        let mut b = FilteredReferenceState::new(&d);
        for x in &xs {
            a.push_reference(x, &s_hat).unwrap();
            b.push_reference(&[x[0] * c], &s_hat).unwrap();
        }
        let mut wa = ControlFilterBank::new(&d);
        let mut wb = ControlFilterBank::new(&d);
        mnfxlms_update(&mut wa, &a, &e, 0.1, 0.0).unwrap();
        mnfxlms_update(&mut wb, &b, &e, 0.1, 0.0).unwrap();
        for (x, y) in wa.all_weights().iter().zip(wb.all_weights()) {
            prop_assert!((x / c - y).abs() <= 1e-9 * (x.abs() / c).max(1e-300));
        }
    }

    #[test]
    fn running_power_never_drifts(samples in prop::collection::vec(-1e3f64..1e3, 1..3000)) {
        let d = SystemDims::new(1, 1, 1, 32, 3).unwrap();
        let s_hat = vec![mcanc::ImpulseResponse::new(vec![1.0, -0.5, 0.25], 8000.0).unwrap()];
        let mut state = FilteredReferenceState::new(&d);
        for &s in &samples {
            state.push_reference(&[s], &s_hat).unwrap();
        }
        let direct = state.direct_power(0);
        prop_assert!(state.power(0) >= 0.0);
        prop_assert!((state.power(0) - direct).abs() <= 1e-8 * direct.max(1e-300) || direct == 0.0);
    }
}
