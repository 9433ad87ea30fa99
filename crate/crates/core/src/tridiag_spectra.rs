//! Eigenvalue machinery for symmetric tridiagonal matrices: Sturm-sequence
//! counts, bisection, inverse-iteration eigenvectors, and the SLEM
//! functional.
//!
//! The characteristic polynomials of the leading principal minors obey
//! `p_k(x) = (d_k - x) p_{k-1}(x) - e_{k-1}^2 p_{k-2}(x)`; the number of sign
//! changes along the sequence counts the eigenvalues strictly below `x`,
//! which turns eigenvalue location into bisection.

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::path_model::{build_path, weight_matrix, TridiagonalMatrix, WeightAssignment};

/// Absolute bisection tolerance used when callers don't supply one.
pub const DEFAULT_EIG_TOL: f64 = 1e-12;

const INVERSE_ITERATION_SHIFT: f64 = 1e-12;
const MAX_INVERSE_ITERATIONS: usize = 50;

/// Full spectrum of a symmetric tridiagonal matrix, largest eigenvalue first.
#[derive(Debug, Clone, PartialEq)]
pub struct SpectralSummary {
    /// Eigenvalues sorted descending.
    pub eigenvalues: Vec<f64>,
    /// Second largest eigenvalue modulus: `max(eigenvalues[1], -eigenvalues[n-1])`.
    pub slem: f64,
}

fn squared_offdiags(t: &TridiagonalMatrix) -> Vec<f64> {
    t.offdiag().iter().map(|e| e * e).collect()
}

/// Scaled Sturm scan at `x`: returns the final polynomial value as
/// `(mantissa, pow2)` with `det(T - xI) = mantissa * 2^pow2`, plus the count
/// of eigenvalues strictly less than `x`.
fn sturm_scan(diag: &[f64], off_sq: &[f64], x: f64) -> (f64, i64, usize) {
    let big = 2f64.powi(256);
    let small = 2f64.powi(-256);
    let mut p_prev = 1.0f64;
    let mut p_cur = diag[0] - x;
    let mut pow2: i64 = 0;
    let mut count = 0usize;
    if p_cur == 0.0 {
        // An exact zero sits between two counts; nudging it toward the sign
        // of its predecessor keeps the "strictly less than x" convention.
        p_cur = f64::MIN_POSITIVE;
    }
    if p_cur < 0.0 {
        count += 1;
    }
    for k in 1..diag.len() {
        let mut p_next = (diag[k] - x) * p_cur - off_sq[k - 1] * p_prev;
        if p_next == 0.0 {
            p_next = f64::MIN_POSITIVE.copysign(p_cur);
        }
        if (p_next < 0.0) != (p_cur < 0.0) {
            count += 1;
        }
        p_prev = p_cur;
        p_cur = p_next;
        let mag = p_cur.abs();
        if mag >= big {
            p_cur *= small;
            p_prev *= small;
            pow2 += 256;
        } else if mag < small {
            p_cur *= big;
            p_prev *= big;
            pow2 -= 256;
        }
    }
    (p_cur, pow2, count)
}

/// Multiply by 2^e in saturating steps, so results outside the binary64
/// range collapse to signed infinity or zero rather than NaN.
fn apply_pow2(mut v: f64, mut e: i64) -> f64 {
    while e != 0 && v != 0.0 && v.is_finite() {
        let step = e.clamp(-1000, 1000) as i32;
        v *= 2f64.powi(step);
        e -= i64::from(step);
    }
    v
}

/// Characteristic polynomial `det(T - xI)` together with the Sturm count of
/// eigenvalues strictly less than `x`.
///
/// The recurrence is jointly rescaled by powers of two, so the count stays
/// exact for sizes up to at least 10^4; the determinant saturates to signed
/// infinity or zero when it leaves binary64 range.
pub fn char_poly_sturm(t: &TridiagonalMatrix, x: f64) -> (f64, usize) {
    assert!(x.is_finite(), "evaluation point must be finite, got {x}");
    let off_sq = squared_offdiags(t);
    let (mantissa, pow2, count) = sturm_scan(t.diag(), &off_sq, x);
    (apply_pow2(mantissa, pow2), count)
}

/// Gershgorin interval guaranteed to contain every eigenvalue.
fn gershgorin_bounds(t: &TridiagonalMatrix) -> (f64, f64) {
    let n = t.n();
    let mut lo = f64::INFINITY;
    let mut hi = f64::NEG_INFINITY;
    for i in 0..n {
        let mut r = 0.0;
        if i > 0 {
            r += t.offdiag()[i - 1].abs();
        }
        if i + 1 < n {
            r += t.offdiag()[i].abs();
        }
        lo = lo.min(t.diag()[i] - r);
        hi = hi.max(t.diag()[i] + r);
    }
    (lo, hi)
}

/// Expand `(lo, hi)` until the Sturm counts certify that all `n` eigenvalues
/// lie strictly inside.
fn certified_bracket(diag: &[f64], off_sq: &[f64], lo0: f64, hi0: f64) -> (f64, f64) {
    let n = diag.len();
    let span = (hi0 - lo0).max(1.0);
    let mut lo = lo0 - 1e-12 * span;
    let mut hi = hi0 + 1e-12 * span;
    let mut step = 1e-9 * span;
    while sturm_scan(diag, off_sq, lo).2 > 0 {
        lo -= step;
        step *= 2.0;
    }
    step = 1e-9 * span;
    while sturm_scan(diag, off_sq, hi).2 < n {
        hi += step;
        step *= 2.0;
    }
    (lo, hi)
}

/// Bisect for the k-th smallest eigenvalue (0-based) inside a certified
/// bracket.
fn bisect_eigenvalue(diag: &[f64], off_sq: &[f64], k: usize, mut lo: f64, mut hi: f64, tol: f64) -> f64 {
    while hi - lo > tol {
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi {
            break;
        }
        if sturm_scan(diag, off_sq, mid).2 > k {
            hi = mid;
        } else {
            lo = mid;
        }
    }
    0.5 * (lo + hi)
}

fn validate_tol(tol: f64) -> Result<()> {
    if !(tol > 0.0 && tol.is_finite()) {
        return Err(Error::validation(format!(
            "bisection tolerance must be positive and finite, got {tol}"
        )));
    }
    Ok(())
}

/// All eigenvalues of `t` by Sturm bisection, each bracketed to width `tol`.
pub fn eigenvalues(t: &TridiagonalMatrix, tol: f64) -> Result<SpectralSummary> {
    validate_tol(tol)?;
    let n = t.n();
    let off_sq = squared_offdiags(t);
    if let Some(bad) = off_sq.iter().find(|v| !v.is_finite()) {
        return Err(Error::validation(format!(
            "squared off-diagonal overflows binary64 ({bad})"
        )));
    }
    let (g_lo, g_hi) = gershgorin_bounds(t);
    let (lo, hi) = certified_bracket(t.diag(), &off_sq, g_lo, g_hi);

    let solve = |k: usize| bisect_eigenvalue(t.diag(), &off_sq, k, lo, hi, tol);
    let mut eigs: Vec<f64> = if n >= 64 {
        (0..n).into_par_iter().map(solve).collect()
    } else {
        (0..n).map(solve).collect()
    };
    eigs.reverse();

    let slem = eigs[1].max(-eigs[n - 1]);
    Ok(SpectralSummary { eigenvalues: eigs, slem })
}

/// Single eigenvalue by ascending 0-based index, without solving for the
/// rest of the spectrum.
pub(crate) fn eigenvalue_by_index(t: &TridiagonalMatrix, k: usize, tol: f64) -> f64 {
    let off_sq = squared_offdiags(t);
    let (g_lo, g_hi) = gershgorin_bounds(t);
    let (lo, hi) = certified_bracket(t.diag(), &off_sq, g_lo, g_hi);
    bisect_eigenvalue(t.diag(), &off_sq, k, lo, hi, tol)
}

/// Second largest eigenvalue modulus of the weight matrix for `w` on an
/// `n`-node path: `max(lambda_2, -lambda_n)`.
pub fn slem(n: usize, w: &WeightAssignment) -> Result<f64> {
    let net = build_path(n)?;
    let t = weight_matrix(&net, w)?;
    Ok(eigenvalues(&t, DEFAULT_EIG_TOL)?.slem)
}

/// Closed-form spectrum at uniform weights 1/2: `cos(k*pi/n)` for `k = 0..n-1`,
/// sorted descending.
pub fn uniform_spectrum(n: usize) -> Result<Vec<f64>> {
    if n < 2 {
        return Err(Error::validation(format!(
            "uniform spectrum needs n >= 2, got {n}"
        )));
    }
    let nf = n as f64;
    Ok((0..n)
        .map(|k| (k as f64 * std::f64::consts::PI / nf).cos())
        .collect())
}

/// Partial-pivot LU of `T - shift*I`. Row swaps introduce a second
/// superdiagonal, so four bands are kept.
struct ShiftedLu {
    main: Vec<f64>,
    sup1: Vec<f64>,
    sup2: Vec<f64>,
    mult: Vec<f64>,
    swapped: Vec<bool>,
}

impl ShiftedLu {
    fn factor(t: &TridiagonalMatrix, shift: f64) -> ShiftedLu {
        let n = t.n();
        let guard = f64::EPSILON * t.inf_norm().max(f64::MIN_POSITIVE);
        let mut main: Vec<f64> = t.diag().iter().map(|d| d - shift).collect();
        let mut sup1: Vec<f64> = t.offdiag().to_vec();
        let mut sub: Vec<f64> = t.offdiag().to_vec();
        let mut sup2 = vec![0.0; n.saturating_sub(2)];
        let mut mult = vec![0.0; n - 1];
        let mut swapped = vec![false; n - 1];

        for i in 0..n - 1 {
            if sub[i].abs() > main[i].abs() {
                swapped[i] = true;
                std::mem::swap(&mut main[i], &mut sub[i]);
                std::mem::swap(&mut sup1[i], &mut main[i + 1]);
                if i + 2 < n {
                    sup2[i] = sup1[i + 1];
                    sup1[i + 1] = 0.0;
                }
            }
            if main[i].abs() < guard {
                main[i] = if main[i] == 0.0 { guard } else { guard.copysign(main[i]) };
            }
            let m = sub[i] / main[i];
            mult[i] = m;
            main[i + 1] -= m * sup1[i];
            if i + 2 < n {
                sup1[i + 1] -= m * sup2[i];
            }
        }
        if main[n - 1].abs() < guard {
            main[n - 1] = if main[n - 1] == 0.0 { guard } else { guard.copysign(main[n - 1]) };
        }
        ShiftedLu { main, sup1, sup2, mult, swapped }
    }

    fn solve(&self, rhs: &[f64]) -> Vec<f64> {
        let n = self.main.len();
        let mut x = rhs.to_vec();
        for i in 0..n - 1 {
            if self.swapped[i] {
                x.swap(i, i + 1);
            }
            x[i + 1] -= self.mult[i] * x[i];
        }
        x[n - 1] /= self.main[n - 1];
        if n >= 2 {
            x[n - 2] = (x[n - 2] - self.sup1[n - 2] * x[n - 1]) / self.main[n - 2];
        }
        for i in (0..n.saturating_sub(2)).rev() {
            x[i] = (x[i] - self.sup1[i] * x[i + 1] - self.sup2[i] * x[i + 2]) / self.main[i];
        }
        x
    }
}

fn norm2(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}

/// Fix an overall sign: largest-magnitude entry positive.
fn canonicalize_sign(v: &mut [f64]) {
    let mut lead = 0.0f64;
    for &x in v.iter() {
        if x.abs() > lead.abs() {
            lead = x;
        }
    }
    if lead < 0.0 {
        for x in v.iter_mut() {
            *x = -*x;
        }
    }
}

/// Unit eigenvector for an eigenvalue known to `tol`, by inverse iteration
/// with a slightly perturbed shift.
///
/// Converges when `||Tv - lambda*v||_2 <= 100 * tol * ||T||_inf`; reports a
/// numerical error with the final residual if 50 iterations don't get there.
pub fn eigenvector(t: &TridiagonalMatrix, lambda: f64, tol: f64) -> Result<Vec<f64>> {
    validate_tol(tol)?;
    if !lambda.is_finite() {
        return Err(Error::validation(format!("eigenvalue must be finite, got {lambda}")));
    }
    let n = t.n();
    let lu = ShiftedLu::factor(t, lambda + INVERSE_ITERATION_SHIFT);
    let target = 100.0 * tol * t.inf_norm().max(f64::MIN_POSITIVE);

    // Fixed pseudo-random start: deterministic, and not orthogonal to any
    // structured eigenvector the way the all-ones vector can be.
    let mut v: Vec<f64> = (0..n)
        .map(|i| (0.7 + 0.3 * ((i as f64 + 1.0) * 0.9817).sin()) * if i % 2 == 0 { 1.0 } else { -0.93 })
        .collect();
    let nv = norm2(&v);
    for x in v.iter_mut() {
        *x /= nv;
    }

    let mut residual = f64::INFINITY;
    for _ in 0..MAX_INVERSE_ITERATIONS {
        let y = lu.solve(&v);
        let ny = norm2(&y);
        if !ny.is_finite() || ny == 0.0 {
            break;
        }
        for (vi, yi) in v.iter_mut().zip(&y) {
            *vi = yi / ny;
        }
        let tv = t.matvec(&v);
        residual = tv
            .iter()
            .zip(&v)
            .map(|(a, b)| (a - lambda * b).powi(2))
            .sum::<f64>()
            .sqrt();
        if residual <= target {
            canonicalize_sign(&mut v);
            return Ok(v);
        }
    }
    Err(Error::Numerical {
        what: format!("inverse iteration for eigenvalue {lambda} did not converge"),
        residual,
    })
}
