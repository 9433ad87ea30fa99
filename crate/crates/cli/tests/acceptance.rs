use std::f64::consts::PI;
use std::process::Command;
use std::time::Instant;

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use fdc_core::{
    build_certificate, build_path, eigenvalues, estimate_rate, generic_initial_state, grid_oracle,
    iterate, matrix_from_expansion, optimize_weights, slem, verify_certificate, weight_matrix,
    OptimizerParams, WeightAssignment,
};

fn criterion(tag: &str, pass: bool, detail: String) {
    println!("[{tag}] {} — {detail}", if pass { "PASS" } else { "FAIL" });
    assert!(pass, "[{tag}] {detail}");
}

#[test]
fn c1_optimizer_recovers_closed_form_optimum() {
    let start = Instant::now();
    let params = OptimizerParams::default();
    let mut worst_w: f64 = 0.0;
    let mut worst_s: f64 = 0.0;
    for n in 2..=50 {
        let init = WeightAssignment::new(vec![0.3; n - 1]).unwrap();
        let result = optimize_weights(n, &init, &params).unwrap();
        let w_dev = result
            .weights
            .values()
            .iter()
            .map(|w| (w - 0.5).abs())
            .fold(0.0f64, f64::max);
        let s_dev = (result.slem - (PI / n as f64).cos()).abs();
        worst_w = worst_w.max(w_dev);
        worst_s = worst_s.max(s_dev);
    }
    let elapsed = start.elapsed().as_secs_f64();
    criterion(
        "C1",
        worst_w <= 1e-4 && worst_s <= 1e-6 && elapsed < 60.0,
        format!(
            "n=2..=50 from init 0.3: max|w-0.5|={worst_w:.2e}, max|slem-cos(pi/n)|={worst_s:.2e}, {elapsed:.1}s"
        ),
    );
}

#[test]
fn c2_spectrum_matches_cosine_closed_form() {
    let start = Instant::now();
    let mut worst: f64 = 0.0;
    let mut worst_n = 0;
    for n in 2..=1000 {
        let w = WeightAssignment::uniform(n, 0.5).unwrap();
        let t = weight_matrix(&build_path(n).unwrap(), &w).unwrap();
        let summary = eigenvalues(&t, 1e-12).unwrap();
        for (k, lambda) in summary.eigenvalues.iter().enumerate() {
            let dev = (lambda - (k as f64 * PI / n as f64).cos()).abs();
            if dev > worst {
                worst = dev;
                worst_n = n;
            }
        }
    }
    let elapsed = start.elapsed().as_secs_f64();
    criterion(
        "C2",
        worst <= 1e-10,
        format!("n=2..=1000 at w=1/2: max|lambda_k - cos(k pi/n)|={worst:.2e} (n={worst_n}), {elapsed:.1}s"),
    );
}

#[test]
fn c3_certificate_verifies_across_sizes() {
    let start = Instant::now();
    let mut worst: f64 = 0.0;
    let mut worst_n = 0;
    let mut all_pass = true;
    for n in 2..=1000 {
        let cert = build_certificate(n).unwrap();
        let w = WeightAssignment::uniform(n, 0.5).unwrap();
        let report = verify_certificate(&cert, &w, 1e-8).unwrap();
        let max = report.max_residual();
        if max > worst {
            worst = max;
            worst_n = n;
        }
        all_pass &= report.pass;
    }
    let elapsed = start.elapsed().as_secs_f64();
    criterion(
        "C3",
        all_pass && worst <= 1e-8,
        format!("n=2..=1000: max residual {worst:.2e} (n={worst_n}), {elapsed:.1}s"),
    );
}

#[test]
fn c4_grid_oracle_agrees_with_closed_form() {
    let start = Instant::now();
    let mut detail = String::new();
    let mut pass = true;
    for (n, res) in [(2usize, 0.01), (3, 0.01), (4, 0.02)] {
        let (argmin, best) = grid_oracle(n, res).unwrap();
        let w_dev = argmin
            .values()
            .iter()
            .map(|w| (w - 0.5).abs())
            .fold(0.0f64, f64::max);
        let s_dev = (best - (PI / n as f64).cos()).abs();
        pass &= w_dev <= res + 1e-12 && s_dev <= 2.0 * res;
        detail.push_str(&format!("n={n}: |w-0.5|={w_dev:.2e}, |slem-cos|={s_dev:.2e}; "));
    }
    let elapsed = start.elapsed().as_secs_f64();
    pass &= elapsed < 300.0;
    criterion("C4", pass, format!("{detail}{elapsed:.1}s"));
}

fn slem_at(n: usize, w: &[f64]) -> f64 {
    slem(n, &WeightAssignment::new(w.to_vec()).unwrap()).unwrap()
}

#[test]
fn c5_subgradient_matches_finite_differences() {
    let mut rng = ChaCha8Rng::seed_from_u64(0xC5);
    let h = 1e-6;
    let mut accepted = 0;
    let mut worst: f64 = 0.0;
    while accepted < 100 {
        let n = rng.random_range(3..=10usize);
        let w: Vec<f64> = (0..n - 1).map(|_| rng.random_range(0.1..0.9)).collect();
        let wa = WeightAssignment::new(w.clone()).unwrap();
        let t = weight_matrix(&build_path(n).unwrap(), &wa).unwrap();
        let vals = eigenvalues(&t, 1e-12).unwrap().eigenvalues;
        let (l2, ln) = (vals[1], vals[n - 1]);
        // unique active branch, and the active eigenvalue simple
        let separated = if l2 > -ln {
            vals[1] - vals[2] >= 1e-3
        } else {
            vals[n - 2] - vals[n - 1] >= 1e-3
        };
        if (l2 + ln).abs() < 1e-3 || !separated {
            continue;
        }
        accepted += 1;
        let g = fdc_core::slem_subgradient(n, &wa).unwrap();
        for i in 0..n - 1 {
            let mut up = w.clone();
            let mut dn = w.clone();
            up[i] += h;
            dn[i] -= h;
            let fd = (slem_at(n, &up) - slem_at(n, &dn)) / (2.0 * h);
            worst = worst.max((g[i] - fd).abs());
        }
    }
    criterion(
        "C5",
        worst <= 1e-5,
        format!("100 simple uniquely-active points, n<=10: max|analytic-FD|={worst:.2e}"),
    );
}

#[test]
fn c6_measured_rates_track_the_slem() {
    let start = Instant::now();
    let mut worst: f64 = 0.0;
    let mut pass = true;
    let mut detail = String::new();
    for (n, steps) in [(3usize, 200usize), (5, 400), (10, 2000), (25, 4000)] {
        let w = WeightAssignment::uniform(n, 0.5).unwrap();
        let x0 = generic_initial_state(n, &w, 0xfdc + n as u64).unwrap();
        let trace = iterate(n, &w, &x0, steps).unwrap();
        let est = estimate_rate(&trace, steps / 4).unwrap();
        let theory = (PI / n as f64).cos();
        let rel = (est.rate - theory).abs() / theory;
        worst = worst.max(rel);
        pass &= rel <= 0.01;
        detail.push_str(&format!("n={n}: {:.6} vs {theory:.6}; ", est.rate));
    }
    let elapsed = start.elapsed().as_secs_f64();
    criterion(
        "C6",
        pass,
        format!("{detail}max rel dev {worst:.2e}, {elapsed:.1}s"),
    );
}

#[test]
fn c7_matrix_builders_agree() {
    let mut rng = ChaCha8Rng::seed_from_u64(0xC7);
    let mut worst: f64 = 0.0;
    for _ in 0..1000 {
        let n = rng.random_range(2..=200usize);
        let w = WeightAssignment::new(
            (0..n - 1).map(|_| rng.random_range(-1.0..2.0)).collect(),
        )
        .unwrap();
        let direct = weight_matrix(&build_path(n).unwrap(), &w).unwrap();
        let expanded = matrix_from_expansion(n, &w).unwrap();
        for (a, b) in direct.diag().iter().zip(expanded.diag()) {
            worst = worst.max((a - b).abs());
        }
        for (a, b) in direct.offdiag().iter().zip(expanded.offdiag()) {
            worst = worst.max((a - b).abs());
        }
    }
    criterion(
        "C7",
        worst <= 1e-14,
        format!("1000 random instances, n<=200: max entry gap {worst:.2e}"),
    );
}

#[test]
fn c8_negative_control_fails_certification() {
    let mut pass = true;
    let mut detail = String::new();
    for (n, weights) in [(3usize, "0.3,0.4"), (6, "0.3,0.4,0.3,0.4,0.3")] {
        let out = Command::new(env!("CARGO_BIN_EXE_fdc"))
            .args(["--json", "certify", "--n", &n.to_string(), "--weights", weights])
            .output()
            .expect("binary runs");
        let code = out.status.code();
        let v: serde_json::Value =
            serde_json::from_slice(&out.stdout).expect("stdout is one JSON object");
        let slack = v["residuals"]["slack_upper"]
            .as_f64()
            .unwrap()
            .max(v["residuals"]["slack_lower"].as_f64().unwrap());
        pass &= code == Some(2) && slack > 1e-3 && v["pass"] == serde_json::json!(false);
        detail.push_str(&format!("n={n}: exit {code:?}, max slack {slack:.2e}; "));
    }
    criterion("C8", pass, detail);
}
