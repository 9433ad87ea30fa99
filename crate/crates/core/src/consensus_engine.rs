//! The averaging iteration `x(t+1) = W x(t)` and empirical convergence
//! measurement against the spectral prediction.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::path_model::{build_path, weight_matrix, WeightAssignment};
use crate::tridiag_spectra::{eigenvalues, eigenvector, DEFAULT_EIG_TOL};

/// Keep at most this many states before decimating.
const MAX_STORED_STATES: usize = 10_000;

/// Error norms below this are treated as exact consensus.
const UNDERFLOW_FLOOR: f64 = 1e-300;

/// Recorded run of the averaging iteration.
#[derive(Debug, Clone, PartialEq)]
pub struct SimulationTrace {
    /// `x(0), x(k), x(2k), …` for `k = state_stride`.
    pub states: Vec<Vec<f64>>,
    /// Spacing between stored states; 1 unless the run exceeds 10⁴ steps.
    pub state_stride: usize,
    /// `‖x(t) - mean·1‖₂` for every `t = 0..=steps`.
    pub error_norms: Vec<f64>,
    /// Average of the initial state, preserved by every step.
    pub mean: f64,
}

impl SimulationTrace {
    pub fn steps(&self) -> usize {
        self.error_norms.len() - 1
    }

    /// The stored state at time `t`, when `t` lies on the stride.
    pub fn state_at(&self, t: usize) -> Option<&[f64]> {
        if !t.is_multiple_of(self.state_stride) {
            return None;
        }
        self.states.get(t / self.state_stride).map(Vec::as_slice)
    }
}

/// Geometric-mean contraction factor measured from a trace.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RateEstimate {
    /// `(e_T / e_burn)^{1/(T - burn)}` over the usable window.
    pub rate: f64,
    /// True when consensus (or underflow) cut the window short of the trace.
    pub truncated: bool,
    /// Inclusive step range the estimate was computed on.
    pub window: (usize, usize),
}

/// Run `steps` synchronous averaging steps from `x0`.
pub fn iterate(
    n: usize,
    w: &WeightAssignment,
    x0: &[f64],
    steps: usize,
) -> Result<SimulationTrace> {
    let net = build_path(n)?;
    let t = weight_matrix(&net, w)?;
    if x0.len() != n {
        return Err(Error::validation(format!(
            "initial state has length {}, expected {n}",
            x0.len()
        )));
    }
    if let Some(bad) = x0.iter().find(|v| !v.is_finite()) {
        return Err(Error::validation(format!("non-finite initial value {bad}")));
    }

    let mean = x0.iter().sum::<f64>() / n as f64;
    let error_norm = |x: &[f64]| -> f64 {
        x.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>().sqrt()
    };

    let state_stride = steps.div_ceil(MAX_STORED_STATES).max(1);
    let mut states = Vec::with_capacity(steps.min(MAX_STORED_STATES) + 1);
    let mut error_norms = Vec::with_capacity(steps + 1);
    let mut x = x0.to_vec();
    states.push(x.clone());
    error_norms.push(error_norm(&x));
    for step in 1..=steps {
        x = t.matvec(&x);
        error_norms.push(error_norm(&x));
        if step % state_stride == 0 {
            states.push(x.clone());
        }
    }
    Ok(SimulationTrace {
        states,
        state_stride,
        error_norms,
        mean,
    })
}

/// Per-step contraction factor after `burn_in` steps. The window is cut short
/// (and flagged `truncated`) when consensus or underflow zeroes the error
/// norm, or — on a contracting trace — at the rounding-noise floor: error
/// norms fall strictly while the iteration still contracts, so their first
/// non-decrease locates the floor, and the window then ends at the last step
/// still above the geometric midpoint of start level and floor, keeping the
/// measured ratios clear of floor contamination.
pub fn estimate_rate(trace: &SimulationTrace, burn_in: usize) -> Result<RateEstimate> {
    let steps = trace.steps();
    if steps < burn_in + 10 {
        return Err(Error::validation(format!(
            "rate estimation needs at least burn_in + 10 = {} steps, trace has {steps}",
            burn_in + 10
        )));
    }
    let e = &trace.error_norms;
    let contracting = e[burn_in + 1] < e[burn_in];
    let mut t_end = burn_in;
    let mut floor_hit = None;
    while t_end < steps {
        let next = e[t_end + 1];
        if next <= UNDERFLOW_FLOOR {
            break;
        }
        if contracting && next >= e[t_end] {
            floor_hit = Some(t_end);
            break;
        }
        t_end += 1;
    }
    if e[burn_in] <= UNDERFLOW_FLOOR || t_end == burn_in {
        return Ok(RateEstimate {
            rate: 0.0,
            truncated: true,
            window: (burn_in, burn_in),
        });
    }
    if let Some(floor_at) = floor_hit {
        let midpoint = (e[burn_in] * e[floor_at]).sqrt();
        while t_end > burn_in + 1 && e[t_end] < midpoint {
            t_end -= 1;
        }
    }
    let rate = (e[t_end] / e[burn_in]).powf(1.0 / (t_end - burn_in) as f64);
    Ok(RateEstimate {
        rate,
        truncated: t_end < steps,
        window: (burn_in, t_end),
    })
}

/// Seeded random start with guaranteed overlap (≥ 1e-3 after centering and
/// normalization) with the eigenvector whose eigenvalue attains the SLEM, so
/// the measured rate reflects the slowest mode.
pub fn generic_initial_state(n: usize, w: &WeightAssignment, seed: u64) -> Result<Vec<f64>> {
    let net = build_path(n)?;
    let t = weight_matrix(&net, w)?;
    let summary = eigenvalues(&t, DEFAULT_EIG_TOL)?;
    let lambda_2 = summary.eigenvalues[1];
    let lambda_n = summary.eigenvalues[n - 1];
    let target = if lambda_2 >= -lambda_n { lambda_2 } else { lambda_n };
    let u = eigenvector(&t, target, DEFAULT_EIG_TOL)?;

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    for _ in 0..64 {
        let x0: Vec<f64> = (0..n).map(|_| rng.random_range(-1.0..1.0)).collect();
        let mean = x0.iter().sum::<f64>() / n as f64;
        let centered: Vec<f64> = x0.iter().map(|v| v - mean).collect();
        let norm = centered.iter().map(|v| v * v).sum::<f64>().sqrt();
        if norm == 0.0 {
            continue;
        }
        let overlap: f64 = centered.iter().zip(&u).map(|(c, ui)| c * ui).sum();
        if overlap.abs() / norm >= 1e-3 {
            return Ok(x0);
        }
    }
    Err(Error::Numerical {
        what: format!("no start with slow-mode overlap found for n={n}"),
        residual: 1e-3,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::tridiag_spectra::slem;
    use std::f64::consts::PI;

    fn half(n: usize) -> WeightAssignment {
        WeightAssignment::uniform(n, 0.5).unwrap()
    }

    #[test]
    fn short_run_matches_hand_products() {
        let trace = iterate(3, &half(3), &[1.0, 0.0, 0.0], 2).unwrap();
        assert_eq!(trace.states.len(), 3);
        assert_eq!(trace.states[0], vec![1.0, 0.0, 0.0]);
        assert_eq!(trace.states[1], vec![0.5, 0.5, 0.0]);
        assert_eq!(trace.states[2], vec![0.5, 0.25, 0.25]);
        assert!((trace.mean - 1.0 / 3.0).abs() < 1e-16);
    }

    #[test]
    fn consensus_start_is_fixed() {
        let x0 = vec![0.375; 6];
        let trace = iterate(6, &half(6), &x0, 20).unwrap();
        for state in &trace.states {
            assert_eq!(*state, x0);
        }
        assert!(trace.error_norms.iter().all(|e| *e == 0.0));
    }

    #[test]
    fn two_nodes_agree_in_one_step() {
        let trace = iterate(2, &half(2), &[1.0, 0.0], 1).unwrap();
        assert_eq!(trace.states[1], vec![0.5, 0.5]);
        assert_eq!(trace.error_norms[1], 0.0);
    }

    #[test]
    fn rejects_malformed_starts() {
        assert!(iterate(3, &half(3), &[1.0, 0.0], 5).is_err());
        assert!(iterate(3, &half(3), &[1.0, f64::NAN, 0.0], 5).is_err());
    }

    #[test]
    fn mean_is_preserved_throughout() {
        let w = WeightAssignment::new(vec![0.3, 0.55, 0.2, 0.7]).unwrap();
        let x0 = [0.9, -1.4, 0.2, 3.0, -0.6];
        let trace = iterate(5, &w, &x0, 500).unwrap();
        for state in &trace.states {
            let m = state.iter().sum::<f64>() / 5.0;
            assert!((m - trace.mean).abs() < 1e-12);
        }
    }

    #[test]
    fn mean_preserved_at_scale() {
        let n = 1000;
        let x0: Vec<f64> = (0..n).map(|i| ((i * 37 % 100) as f64) / 50.0 - 1.0).collect();
        let trace = iterate(n, &half(n), &x0, 10_000).unwrap();
        for state in &trace.states {
            let m = state.iter().sum::<f64>() / n as f64;
            assert!((m - trace.mean).abs() < 1e-12);
        }
        assert_eq!(trace.state_stride, 1);
        assert_eq!(trace.states.len(), 10_001);
    }

    #[test]
    fn error_norms_monotone_when_contracting() {
        let w = WeightAssignment::new(vec![0.4, 0.5, 0.6]).unwrap();
        assert!(slem(4, &w).unwrap() < 1.0);
        let trace = iterate(4, &w, &[2.0, -1.0, 0.5, 0.25], 300).unwrap();
        for t in 1..trace.error_norms.len() {
            assert!(
                trace.error_norms[t] <= trace.error_norms[t - 1] + 1e-14,
                "t={t}"
            );
        }
    }

    #[test]
    fn contraction_never_beats_the_spectral_bound() {
        for n in [3usize, 10] {
            let s = slem(n, &half(n)).unwrap();
            let x0: Vec<f64> = (0..n).map(|i| (i as f64 * 1.7).sin()).collect();
            let trace = iterate(n, &half(n), &x0, 200).unwrap();
            let e0 = trace.error_norms[0];
            let mut bound = e0;
            for t in 1..=200 {
                bound *= s + 1e-9;
                assert!(
                    trace.error_norms[t] <= bound + 1e-13 * e0,
                    "n={n} t={t}: {} > {bound}",
                    trace.error_norms[t]
                );
            }
        }
    }

    #[test]
    fn decimation_keeps_stride_consistent() {
        let n = 4;
        let trace = iterate(n, &half(n), &[1.0, 0.0, -1.0, 0.5], 25_000).unwrap();
        assert_eq!(trace.state_stride, 3);
        assert_eq!(trace.error_norms.len(), 25_001);
        assert_eq!(trace.states.len(), 1 + 25_000 / 3);
        for (m, state) in trace.states.iter().enumerate().step_by(500) {
            let e = state
                .iter()
                .map(|v| (v - trace.mean) * (v - trace.mean))
                .sum::<f64>()
                .sqrt();
            let t = m * trace.state_stride;
            assert!((e - trace.error_norms[t]).abs() < 1e-15, "t={t}");
            assert!(trace.state_at(t).is_some());
        }
        assert!(trace.state_at(1).is_none());
    }

    #[test]
    fn measured_rate_matches_second_eigenvalue() {
        let trace = iterate(3, &half(3), &[1.0, 0.0, 0.0], 200).unwrap();
        let est = estimate_rate(&trace, 50).unwrap();
        assert!((est.rate - 0.5).abs() < 0.005, "rate {}", est.rate);
        assert!(est.window.1 > est.window.0);

        let x0 = generic_initial_state(10, &half(10), 0xfdc).unwrap();
        let trace = iterate(10, &half(10), &x0, 2000).unwrap();
        let est = estimate_rate(&trace, 500).unwrap();
        let theory = (PI / 10.0).cos();
        assert!(
            (est.rate - theory).abs() < 0.01 * theory,
            "rate {} vs {theory}",
            est.rate
        );
    }

    #[test]
    fn consensus_start_gives_degenerate_estimate() {
        let trace = iterate(5, &half(5), &[1.0; 5], 100).unwrap();
        let est = estimate_rate(&trace, 10).unwrap();
        assert!(est.truncated);
        assert_eq!(est.rate, 0.0);
        assert_eq!(est.window, (10, 10));
    }

    #[test]
    fn underflowed_tail_truncates_the_window() {
        let trace = iterate(2, &half(2), &[1.0, 0.0], 50).unwrap();
        let est = estimate_rate(&trace, 0).unwrap();
        assert!(est.truncated);
        assert_eq!(est.window, (0, 0));

        assert!(estimate_rate(&trace, 45).is_err());
    }

    #[test]
    fn generic_starts_are_deterministic_and_overlapping() {
        let a = generic_initial_state(6, &half(6), 7).unwrap();
        let b = generic_initial_state(6, &half(6), 7).unwrap();
        assert_eq!(a, b);
        let c = generic_initial_state(6, &half(6), 8).unwrap();
        assert_ne!(a, c);
        assert!(a.iter().all(|v| v.abs() <= 1.0));
    }
}

