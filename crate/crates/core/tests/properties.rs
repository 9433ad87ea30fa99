use proptest::prelude::*;
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use fdc_core::{
    assemble_x, build_certificate, build_sdp_instance, closed_form_weights,
    duality_gap, estimate_rate, generic_initial_state, iterate, optimize_weights,
    primal_feasible, slem, verify_certificate, OptimizerParams, WeightAssignment,
};

fn random_weights(rng: &mut ChaCha8Rng, edges: usize, lo: f64, hi: f64) -> WeightAssignment {
    WeightAssignment::new((0..edges).map(|_| rng.random_range(lo..hi)).collect()).unwrap()
}

#[test]
fn slem_is_convex_in_the_weights() {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    for _ in 0..1000 {
        let n = rng.random_range(2..=10usize);
        let a = random_weights(&mut rng, n - 1, 0.0, 1.0);
        let b = random_weights(&mut rng, n - 1, 0.0, 1.0);
        let mid = WeightAssignment::new(
            a.values()
                .iter()
                .zip(b.values())
                .map(|(x, y)| 0.5 * (x + y))
                .collect(),
        )
        .unwrap();
        let lhs = slem(n, &mid).unwrap();
        let rhs = 0.5 * (slem(n, &a).unwrap() + slem(n, &b).unwrap());
        assert!(lhs <= rhs + 1e-12, "n={n}, midpoint {lhs} vs average {rhs}");
    }
}

#[test]
fn feasibility_brackets_the_slem() {
    let mut rng = ChaCha8Rng::seed_from_u64(12);
    for _ in 0..40 {
        let n = rng.random_range(2..=20usize);
        let w = random_weights(&mut rng, n - 1, 0.1, 0.9);
        let s = slem(n, &w).unwrap();
        let above = primal_feasible(n, &w, s + 1e-9, 1e-12).unwrap();
        assert!(above.feasible, "n={n}, s+1e-9 must be feasible");
        let below = primal_feasible(n, &w, s - 1e-6, 1e-12).unwrap();
        assert!(!below.feasible, "n={n}, s-1e-6 must be infeasible");
    }
}

#[test]
fn feasibility_bisection_lands_on_the_certificate_value() {
    for n in [3usize, 8, 20] {
        let (w, _) = closed_form_weights(n).unwrap();
        let cert = build_certificate(n).unwrap();
        let (mut lo, mut hi) = (0.0f64, 1.0f64);
        while hi - lo > 1e-11 {
            let mid = 0.5 * (lo + hi);
            if primal_feasible(n, &w, mid, 1e-12).unwrap().feasible {
                hi = mid;
            } else {
                lo = mid;
            }
        }
        let dev = (hi - cert.s).abs();
        assert!(dev < 1e-9, "n={n}, bisected {hi} vs certified {}", cert.s);
    }
}

#[test]
fn certificate_gap_vanishes_with_the_stacked_dual_matrix() {
    for n in [2usize, 5, 33, 64] {
        let cert = build_certificate(n).unwrap();
        let (w, _) = closed_form_weights(n).unwrap();
        let instance = build_sdp_instance(n).unwrap();
        let x = assemble_x(&w, cert.s);
        let stacked: Vec<f64> = cert.z1.iter().chain(&cert.z2).copied().collect();
        let z = nalgebra::DMatrix::from_fn(2 * n, 2 * n, |r, c| stacked[r] * stacked[c]);
        let gap = duality_gap(&instance, &x, &z).unwrap();
        assert!(gap.abs() < 1e-12, "n={n}, gap {gap:.2e}");
    }
}

#[test]
fn optimizer_reaches_the_certified_value_from_random_starts() {
    let mut rng = ChaCha8Rng::seed_from_u64(13);
    let params = OptimizerParams::default();
    for n in [3usize, 6] {
        let cert = build_certificate(n).unwrap();
        for _ in 0..3 {
            let init = random_weights(&mut rng, n - 1, 0.05, 0.95);
            let result = optimize_weights(n, &init, &params).unwrap();
            let dev = (result.slem - cert.s).abs();
            assert!(dev <= 1e-6, "n={n}, optimized {} vs certified {}", result.slem, cert.s);
        }
    }
}

#[test]
fn measured_rate_tracks_the_spectrum_off_optimum() {
    let w = WeightAssignment::new(vec![0.3, 0.5, 0.6, 0.4, 0.45]).unwrap();
    let n = 6;
    let x0 = generic_initial_state(n, &w, 99).unwrap();
    let trace = iterate(n, &w, &x0, 400).unwrap();
    let est = estimate_rate(&trace, 150).unwrap();
    let expected = slem(n, &w).unwrap();
    let rel = (est.rate - expected).abs() / expected;
    assert!(rel < 0.01, "measured {} vs spectral {expected}", est.rate);
}

#[test]
fn certified_value_matches_uniform_spectrum_up_to_large_n() {
    for n in [2usize, 3, 10, 64, 100, 1000] {
        let cert = build_certificate(n).unwrap();
        let (w, slem_closed) = closed_form_weights(n).unwrap();
        let computed = slem(n, &w).unwrap();
        assert!(
            (computed - cert.s).abs() < 1e-10 && (slem_closed - cert.s).abs() < 1e-12,
            "n={n}: spectral {computed}, certified {}",
            cert.s
        );
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(30))]

    #[test]
    fn single_edge_deviation_is_detected(
        n in 3usize..=12,
        edge in 0usize..11,
        bump in prop_oneof![0.02f64..0.3, -0.3f64..-0.02],
    ) {
        let edge = edge % (n - 1);
        let mut w = vec![0.5; n - 1];
        w[edge] += bump;
        let wa = WeightAssignment::new(w).unwrap();
        let cert = build_certificate(n).unwrap();
        let report = verify_certificate(&cert, &wa, 1e-8).unwrap();
        prop_assert!(!report.pass, "bump {bump} on edge {edge} went unnoticed");
        let (w_opt, _) = closed_form_weights(n).unwrap();
        let clean = verify_certificate(&cert, &w_opt, 1e-8).unwrap();
        prop_assert!(clean.pass);
    }

    #[test]
    fn error_norms_contract_at_the_spectral_factor(
        n in 2usize..=8,
        seed in 0u64..1000,
    ) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let w = random_weights(&mut rng, n - 1, 0.1, 0.9);
        let x0: Vec<f64> = (0..n).map(|_| rng.random_range(-1.0..1.0)).collect();
        let trace = iterate(n, &w, &x0, 50).unwrap();
        let factor = slem(n, &w).unwrap();
        for t in 0..50 {
            let e_t = trace.error_norms[t];
            let bound = factor * e_t + 1e-11 * (e_t + trace.error_norms[0]);
            prop_assert!(
                trace.error_norms[t + 1] <= bound,
                "t={t}: {} > {bound}",
                trace.error_norms[t + 1]
            );
        }
    }

    #[test]
    fn rate_estimates_stay_bounded(
        n in 2usize..=8,
        seed in 0u64..1000,
    ) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let w = random_weights(&mut rng, n - 1, 0.1, 0.9);
        let x0: Vec<f64> = (0..n).map(|_| rng.random_range(-1.0..1.0)).collect();
        let trace = iterate(n, &w, &x0, 100).unwrap();
        let est = estimate_rate(&trace, 10).unwrap();
        // stalled traces read as 1, expanding ones as the spectral factor
        let cap = slem(n, &w).unwrap().max(1.0) + 1e-9;
        prop_assert!(est.rate <= cap && est.rate >= 0.0, "rate {}, cap {cap}", est.rate);
    }
}
