//! Closed-form optimality certificate for the uniform half-weight profile.
//!
//! The certificate packages two vectors `z1`, `z2` (expanded from coordinate
//! sequences `a`, `a_prime` over the edge basis) whose rank-one dual matrix
//! `Z = (z1; z2)(z1; z2)ᵀ` complements the primal point `(w ≡ 1/2, s = cos(π/n))`:
//! both LMI blocks annihilate their respective vector, the dual feasibility
//! balance `(z1ᵀα_i)² = (z2ᵀα_i)²` holds on every edge, and the duality gap
//! vanishes. Verification is numerical; every condition becomes a residual.

use std::collections::BTreeMap;
use std::f64::consts::PI;

use crate::error::{Error, Result};
use crate::path_model::{
    build_path, edge_difference, gram_matrix, weight_matrix, WeightAssignment, INV_SQRT_2,
};
use crate::sdp_forms::{assemble_x, build_sdp_instance, duality_gap, trace_f0_z, MAX_DENSE_NODES};

/// Residual ceiling for the construction-time identities.
const BUILD_TOL: f64 = 1e-12;

/// Dual variable in factored form for an `n`-node path.
#[derive(Debug, Clone, PartialEq)]
pub struct DualCertificate {
    /// Node count.
    pub n: usize,
    /// Angle `π/n`.
    pub theta: f64,
    /// Certified objective value `cos θ`.
    pub s: f64,
    /// Edge coordinates of `z1`: `a[i] = sin(iθ)/sin(θ) · a₁`.
    pub a: Vec<f64>,
    /// Edge coordinates of `z2`; alternating in sign.
    pub a_prime: Vec<f64>,
    /// `Σ a[i]·α_i`, length n.
    pub z1: Vec<f64>,
    /// `Σ a_prime[i]·α_i`, length n.
    pub z2: Vec<f64>,
}

/// Outcome of checking every optimality condition.
#[derive(Debug, Clone, PartialEq)]
pub struct CertificateReport {
    /// Condition name → absolute residual. Keys: `slack_upper`, `slack_lower`,
    /// `dual_feas_max`, `normalization`, `orthogonality`, `strong_duality`, `gap`.
    pub residuals: BTreeMap<String, f64>,
    /// True when every residual is at most the caller's tolerance.
    pub pass: bool,
}

impl CertificateReport {
    /// Largest residual across all conditions.
    pub fn max_residual(&self) -> f64 {
        self.residuals
            .values()
            .copied()
            .fold(f64::NEG_INFINITY, f64::max)
    }
}

/// Both coordinate sequences scaled by given leading entries.
fn scaled_coordinates(n: usize, a1: f64, a1_prime: f64) -> (Vec<f64>, Vec<f64>) {
    let theta = PI / n as f64;
    let phi = PI - theta;
    let mut a = Vec::with_capacity(n - 1);
    let mut a_prime = Vec::with_capacity(n - 1);
    for i in 1..n {
        let i_f = i as f64;
        a.push((i_f * theta).sin() / theta.sin() * a1);
        a_prime.push((i_f * phi).sin() / phi.sin() * a1_prime);
    }
    (a, a_prime)
}

/// Expand edge coordinates into a node vector: `z[j] = (c_{j+1} - c_j)/√2`.
fn expand_coordinates(coords: &[f64]) -> Vec<f64> {
    let n = coords.len() + 1;
    let mut z = vec![0.0; n];
    for (j, zj) in z.iter_mut().enumerate() {
        let next = if j < n - 1 { coords[j] } else { 0.0 };
        let prev = if j > 0 { coords[j - 1] } else { 0.0 };
        *zj = (next - prev) * INV_SQRT_2;
    }
    z
}

fn dot(x: &[f64], y: &[f64]) -> f64 {
    x.iter().zip(y).map(|(a, b)| a * b).sum()
}

fn sum(x: &[f64]) -> f64 {
    x.iter().sum()
}

/// Coordinate sequences `(a, a_prime)` with `a₁ = (1 + cos θ)/√n` and
/// `a′₁ = (1 - cos θ)/√n`.
pub fn certificate_coordinates(n: usize) -> Result<(Vec<f64>, Vec<f64>)> {
    build_path(n)?;
    let theta = PI / n as f64;
    let root_n = (n as f64).sqrt();
    let a1 = (1.0 + theta.cos()) / root_n;
    let a1_prime = (1.0 - theta.cos()) / root_n;
    Ok(scaled_coordinates(n, a1, a1_prime))
}

/// Assemble the certificate and check its construction identities.
pub fn build_certificate(n: usize) -> Result<DualCertificate> {
    let (a, a_prime) = certificate_coordinates(n)?;
    let theta = PI / n as f64;
    let s = theta.cos();
    let z1 = expand_coordinates(&a);
    let z2 = expand_coordinates(&a_prime);

    let checks = [
        ("z1 norm split (1+s)/2", dot(&z1, &z1) - 0.5 * (1.0 + s)),
        ("z2 norm split (1-s)/2", dot(&z2, &z2) - 0.5 * (1.0 - s)),
        ("z1 orthogonal to ones", sum(&z1)),
        ("z2 orthogonal to ones", sum(&z2)),
    ];
    for (what, residual) in checks {
        let residual = residual.abs();
        if residual.is_nan() || residual > BUILD_TOL {
            return Err(Error::Inconsistency {
                what: format!("certificate construction: {what}"),
                residual,
            });
        }
    }

    Ok(DualCertificate {
        n,
        theta,
        s,
        a,
        a_prime,
        z1,
        z2,
    })
}

/// Check every optimality condition of `cert` against the weights `w`,
/// reporting one absolute residual per condition. Verification failures are
/// reported in the result, never raised; errors cover only malformed inputs.
pub fn verify_certificate(
    cert: &DualCertificate,
    w: &WeightAssignment,
    tol: f64,
) -> Result<CertificateReport> {
    if !(tol > 0.0 && tol.is_finite()) {
        return Err(Error::validation(format!(
            "verification tolerance must be positive and finite, got {tol}"
        )));
    }
    let n = cert.n;
    let net = build_path(n)?;
    let t = weight_matrix(&net, w)?;
    let s = cert.s;
    let nf = n as f64;

    let wz1 = t.matvec(&cert.z1);
    let wz2 = t.matvec(&cert.z2);
    let mean1 = sum(&cert.z1) / nf;
    let mean2 = sum(&cert.z2) / nf;
    let inf = |it: &mut dyn Iterator<Item = f64>| it.fold(0.0f64, |m, v| m.max(v.abs()));

    // (sI + 11ᵀ/n - W) z1 and (sI - 11ᵀ/n + W) z2, row by row.
    let slack_upper = inf(&mut (0..n).map(|j| s * cert.z1[j] + mean1 - wz1[j]));
    let slack_lower = inf(&mut (0..n).map(|j| s * cert.z2[j] - mean2 + wz2[j]));

    let dual_feas_max = inf(&mut (1..n).map(|i| {
        let d1 = edge_difference(&cert.z1, i);
        let d2 = edge_difference(&cert.z2, i);
        d1 * d1 - d2 * d2
    }));

    let n1 = dot(&cert.z1, &cert.z1);
    let n2 = dot(&cert.z2, &cert.z2);
    let normalization = (n1 + n2 - 1.0).abs();
    let orthogonality = (sum(&cert.z1).abs()).max(sum(&cert.z2).abs());
    let strong_duality = (s - (n1 - n2)).abs();

    let gap = if n <= MAX_DENSE_NODES {
        let inst = build_sdp_instance(n)?;
        let x = assemble_x(w, s);
        let mut stacked = cert.z1.clone();
        stacked.extend_from_slice(&cert.z2);
        let z = nalgebra::DMatrix::from_fn(2 * n, 2 * n, |r, c| stacked[r] * stacked[c]);
        duality_gap(&inst, &x, &z)?.abs()
    } else {
        (s + trace_f0_z(n, &cert.z1, &cert.z2)).abs()
    };

    let mut residuals = BTreeMap::new();
    residuals.insert("slack_upper".to_string(), slack_upper);
    residuals.insert("slack_lower".to_string(), slack_lower);
    residuals.insert("dual_feas_max".to_string(), dual_feas_max);
    residuals.insert("normalization".to_string(), normalization);
    residuals.insert("orthogonality".to_string(), orthogonality);
    residuals.insert("strong_duality".to_string(), strong_duality);
    residuals.insert("gap".to_string(), gap);
    let pass = residuals.values().all(|r| *r <= tol);
    Ok(CertificateReport { residuals, pass })
}

/// Verify the three-term recurrences satisfied by the coordinate sequences at
/// `w ≡ 1/2`, `s = cos(π/n)`, plus the stationarity identity
/// `(1 - s)·a_i = 2w_i·Σ_j a_j G[i][j]` through the edge Gram matrix.
pub fn slackness_recurrence_check(n: usize, tol: f64) -> Result<bool> {
    if n < 3 {
        return Err(Error::validation(format!(
            "recurrence check needs n >= 3, got {n}"
        )));
    }
    if !(tol > 0.0 && tol.is_finite()) {
        return Err(Error::validation(format!(
            "recurrence tolerance must be positive and finite, got {tol}"
        )));
    }
    let (a, ap) = certificate_coordinates(n)?;
    let s = (PI / n as f64).cos();
    let m = n - 1;

    let mut ok = true;
    let mut check = |residual: f64| ok &= residual.abs() <= tol;

    // Boundary rows, then the interior three-term recurrences.
    check(2.0 * s * a[0] - a[1]);
    check(a[m - 2] - 2.0 * s * a[m - 1]);
    check(2.0 * s * ap[0] + ap[1]);
    check(ap[m - 2] + 2.0 * s * ap[m - 1]);
    for i in 1..m - 1 {
        check(a[i - 1] - 2.0 * s * a[i] + a[i + 1]);
        check(ap[i - 1] + 2.0 * s * ap[i] + ap[i + 1]);
    }

    let g = gram_matrix(n)?;
    for i in 0..m {
        let gram_dot: f64 = (0..m).map(|j| a[j] * g[(i, j)]).sum();
        check((1.0 - s) * a[i] - 2.0 * 0.5 * gram_dot);
    }
    Ok(ok)
}
