//! The SLEM minimization as a standard-form semidefinite program.
//!
//! With `x = (2w_1, …, 2w_{n-1}, s)`, the constraint `-sI ⪯ W - 11ᵀ/n ⪯ sI`
//! becomes `F(x) = F0 + Σ x_i F_i ⪰ 0` where the coefficient matrices pair
//! each n×n block with its negation (`σ_z ⊗ ·` Kronecker structure). The
//! block-diagonal form means the 2n×2n matrices are redundant — the two n×n
//! blocks carry everything — but materializing them keeps the optimization
//! formalism checkable as written.

use nalgebra::DMatrix;

use crate::error::{Error, Result};
use crate::path_model::{basis_vector, build_path, edge_difference, weight_matrix, WeightAssignment};

/// Largest node count for which dense 2n×2n instances are materialized.
pub const MAX_DENSE_NODES: usize = 64;

/// Standard-form SDP data: `minimize cᵀx subject to F0 + Σ x_i F_i ⪰ 0`.
#[derive(Debug, Clone, PartialEq)]
pub struct SdpInstance {
    /// Node count.
    pub n: usize,
    /// Constant term, `-σ_z ⊗ (I - 11ᵀ/n)`, 2n×2n.
    pub f0: DMatrix<f64>,
    /// Coefficients `F_1 … F_n`: `σ_z ⊗ α_i α_iᵀ` for the weights, identity
    /// for the objective variable.
    pub f: Vec<DMatrix<f64>>,
    /// Cost vector `(0, …, 0, 1)`.
    pub c: Vec<f64>,
}

/// Feasibility margins of the two LMI blocks.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FeasibilityReport {
    /// True when both block minima are at least `-tol`.
    pub feasible: bool,
    /// Smallest eigenvalue of `sI + 11ᵀ/n - W`.
    pub min_eig_upper: f64,
    /// Smallest eigenvalue of `sI - 11ᵀ/n + W`.
    pub min_eig_lower: f64,
}

/// Block-diagonal embedding `diag(a, -a)`.
fn kron_sigma_z(a: &DMatrix<f64>) -> DMatrix<f64> {
    let n = a.nrows();
    let mut m = DMatrix::zeros(2 * n, 2 * n);
    for r in 0..n {
        for c in 0..n {
            m[(r, c)] = a[(r, c)];
            m[(n + r, n + c)] = -a[(r, c)];
        }
    }
    m
}

fn check_dense_scale(n: usize) -> Result<()> {
    if n > MAX_DENSE_NODES {
        return Err(Error::validation(format!(
            "dense SDP instances are limited to n <= {MAX_DENSE_NODES}, got {n}; use the \
             block or factored forms instead"
        )));
    }
    Ok(())
}

/// Materialize the SDP data for an `n`-node path.
pub fn build_sdp_instance(n: usize) -> Result<SdpInstance> {
    build_path(n)?;
    check_dense_scale(n)?;

    let nf = n as f64;
    let mut centering = DMatrix::identity(n, n);
    for r in 0..n {
        for c in 0..n {
            centering[(r, c)] -= 1.0 / nf;
        }
    }
    let f0 = -kron_sigma_z(&centering);

    let mut f = Vec::with_capacity(n);
    for i in 1..n {
        let a = basis_vector(n, i)?;
        let mut outer = DMatrix::zeros(n, n);
        for r in 0..n {
            for c in 0..n {
                outer[(r, c)] = a[r] * a[c];
            }
        }
        f.push(kron_sigma_z(&outer));
    }
    f.push(DMatrix::identity(2 * n, 2 * n));

    let mut c = vec![0.0; n];
    c[n - 1] = 1.0;
    Ok(SdpInstance { n, f0, f, c })
}

/// Primal variable `(2w_1, …, 2w_{n-1}, s)`.
pub fn assemble_x(w: &WeightAssignment, s: f64) -> Vec<f64> {
    let mut x: Vec<f64> = w.values().iter().map(|wi| 2.0 * wi).collect();
    x.push(s);
    x
}

/// The two n×n LMI blocks of `F(x)`: `sI + 11ᵀ/n - W` and `sI - 11ᵀ/n + W`.
pub fn lmi_blocks(
    n: usize,
    w: &WeightAssignment,
    s: f64,
) -> Result<(DMatrix<f64>, DMatrix<f64>)> {
    let net = build_path(n)?;
    let t = weight_matrix(&net, w)?;
    let dense_w = t.to_dense();
    let nf = n as f64;
    let mut upper = DMatrix::zeros(n, n);
    let mut lower = DMatrix::zeros(n, n);
    for r in 0..n {
        for c in 0..n {
            let id = if r == c { s } else { 0.0 };
            upper[(r, c)] = id + 1.0 / nf - dense_w[(r, c)];
            lower[(r, c)] = id - 1.0 / nf + dense_w[(r, c)];
        }
    }
    Ok((upper, lower))
}

/// Check `-sI ⪯ W - 11ᵀ/n ⪯ sI` by the smallest eigenvalue of each block.
pub fn primal_feasible(
    n: usize,
    w: &WeightAssignment,
    s: f64,
    tol: f64,
) -> Result<FeasibilityReport> {
    if !(tol >= 0.0 && tol.is_finite()) {
        return Err(Error::validation(format!(
            "feasibility tolerance must be non-negative and finite, got {tol}"
        )));
    }
    let (upper, lower) = lmi_blocks(n, w, s)?;
    let min_eig = |m: DMatrix<f64>| -> f64 {
        nalgebra::SymmetricEigen::new(m)
            .eigenvalues
            .iter()
            .copied()
            .fold(f64::INFINITY, f64::min)
    };
    let min_eig_upper = min_eig(upper);
    let min_eig_lower = min_eig(lower);
    Ok(FeasibilityReport {
        feasible: min_eig_upper >= -tol && min_eig_lower >= -tol,
        min_eig_upper,
        min_eig_lower,
    })
}

/// Duality gap `cᵀx + Tr[F0 Z]` for a primal point and dual matrix.
pub fn duality_gap(instance: &SdpInstance, x: &[f64], z: &DMatrix<f64>) -> Result<f64> {
    let n = instance.n;
    if x.len() != n {
        return Err(Error::validation(format!(
            "primal variable has length {}, expected {n}",
            x.len()
        )));
    }
    if z.nrows() != 2 * n || z.ncols() != 2 * n {
        return Err(Error::validation(format!(
            "dual matrix is {}x{}, expected {}x{}",
            z.nrows(),
            z.ncols(),
            2 * n,
            2 * n
        )));
    }
    let cx: f64 = instance.c.iter().zip(x).map(|(ci, xi)| ci * xi).sum();
    let mut tr = 0.0;
    for r in 0..2 * n {
        for c in 0..2 * n {
            tr += instance.f0[(r, c)] * z[(c, r)];
        }
    }
    Ok(cx + tr)
}

/// `Tr[F0 Z]` for the rank-one-block dual `Z = diag(z1 z1ᵀ, z2 z2ᵀ)`, with
/// no dense matrices: `-(z1ᵀz1 - (1ᵀz1)²/n) + (z2ᵀz2 - (1ᵀz2)²/n)`.
pub fn trace_f0_z(n: usize, z1: &[f64], z2: &[f64]) -> f64 {
    let nf = n as f64;
    let sq = |v: &[f64]| v.iter().map(|x| x * x).sum::<f64>();
    let sum = |v: &[f64]| v.iter().sum::<f64>();
    let s1 = sum(z1);
    let s2 = sum(z2);
    -(sq(z1) - s1 * s1 / nf) + (sq(z2) - s2 * s2 / nf)
}

/// `Tr[F_i Z]` for `i = 1..n-1` on the same factored dual:
/// `(α_iᵀz1)² - (α_iᵀz2)²`.
pub fn trace_fi_z(z1: &[f64], z2: &[f64], i: usize) -> f64 {
    let d1 = edge_difference(z1, i);
    let d2 = edge_difference(z2, i);
    d1 * d1 - d2 * d2
}

/// `Tr[F_n Z]` on the factored dual: `z1ᵀz1 + z2ᵀz2`.
pub fn trace_fn_z(z1: &[f64], z2: &[f64]) -> f64 {
    z1.iter().map(|x| x * x).sum::<f64>() + z2.iter().map(|x| x * x).sum::<f64>()
}
