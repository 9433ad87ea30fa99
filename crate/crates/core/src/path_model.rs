//! Path networks, per-edge weights, and the two constructions of the
//! averaging weight matrix.
//!
//! A path on `n` nodes has edges `(i, i+1)` for `i = 1..n-1` (1-based). An
//! edge weight vector `w` of length `n-1` induces the symmetric tridiagonal
//! matrix with off-diagonal `w` and diagonal chosen so every row sums to 1.
//! The same matrix can be assembled as `I - sum_i 2 w_i a_i a_i^T` from the
//! unit edge-difference vectors `a_i`; the two routes cross-validate each
//! other.

use nalgebra::DMatrix;

use crate::error::{Error, Result};

pub const INV_SQRT_2: f64 = std::f64::consts::FRAC_1_SQRT_2;

/// A path graph on `n >= 2` nodes.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct PathNetwork {
    n: usize,
}

impl PathNetwork {
    pub fn node_count(&self) -> usize {
        self.n
    }

    pub fn edge_count(&self) -> usize {
        self.n - 1
    }

    /// Edges as 1-based node pairs `(i, i+1)`.
    pub fn edges(&self) -> impl Iterator<Item = (usize, usize)> {
        (1..self.n).map(|i| (i, i + 1))
    }
}

/// Build a path network with `n` nodes.
pub fn build_path(n: usize) -> Result<PathNetwork> {
    if n < 2 {
        return Err(Error::validation(format!(
            "path network needs at least 2 nodes, got {n}"
        )));
    }
    Ok(PathNetwork { n })
}

/// One weight per path edge; `w[i]` (0-based) sits on edge `(i+1, i+2)`.
///
/// Values are unconstrained reals apart from finiteness; the optimizer
/// searches the whole space.
#[derive(Debug, Clone, PartialEq)]
pub struct WeightAssignment {
    w: Vec<f64>,
}

impl WeightAssignment {
    pub fn new(w: Vec<f64>) -> Result<Self> {
        if w.is_empty() {
            return Err(Error::validation("weight vector must be non-empty"));
        }
        if let Some(bad) = w.iter().find(|v| !v.is_finite()) {
            return Err(Error::validation(format!("non-finite weight {bad}")));
        }
        Ok(WeightAssignment { w })
    }

    /// All edges of an `n`-node path carry the same weight.
    pub fn uniform(n: usize, value: f64) -> Result<Self> {
        if n < 2 {
            return Err(Error::validation(format!(
                "uniform weights need n >= 2, got {n}"
            )));
        }
        WeightAssignment::new(vec![value; n - 1])
    }

    pub fn values(&self) -> &[f64] {
        &self.w
    }

    pub fn edge_count(&self) -> usize {
        self.w.len()
    }

    /// Node count of the path this assignment belongs to.
    pub fn node_count(&self) -> usize {
        self.w.len() + 1
    }
}

/// Symmetric tridiagonal matrix stored as diagonal plus one off-diagonal.
#[derive(Debug, Clone, PartialEq)]
pub struct TridiagonalMatrix {
    diag: Vec<f64>,
    offdiag: Vec<f64>,
}

impl TridiagonalMatrix {
    pub fn new(diag: Vec<f64>, offdiag: Vec<f64>) -> Result<Self> {
        if diag.len() < 2 {
            return Err(Error::validation(format!(
                "tridiagonal matrix needs size >= 2, got {}",
                diag.len()
            )));
        }
        if offdiag.len() + 1 != diag.len() {
            return Err(Error::validation(format!(
                "off-diagonal length {} does not match diagonal length {}",
                offdiag.len(),
                diag.len()
            )));
        }
        if diag.iter().chain(offdiag.iter()).any(|v| !v.is_finite()) {
            return Err(Error::validation("non-finite matrix entry"));
        }
        Ok(TridiagonalMatrix { diag, offdiag })
    }

    pub fn n(&self) -> usize {
        self.diag.len()
    }

    pub fn diag(&self) -> &[f64] {
        &self.diag
    }

    pub fn offdiag(&self) -> &[f64] {
        &self.offdiag
    }

    /// Matrix-vector product in O(n).
    pub fn matvec(&self, x: &[f64]) -> Vec<f64> {
        let n = self.n();
        assert_eq!(x.len(), n, "matvec dimension mismatch");
        let mut y = vec![0.0; n];
        for i in 0..n {
            let mut acc = self.diag[i] * x[i];
            if i > 0 {
                acc += self.offdiag[i - 1] * x[i - 1];
            }
            if i + 1 < n {
                acc += self.offdiag[i] * x[i + 1];
            }
            y[i] = acc;
        }
        y
    }

    /// Max absolute row sum.
    pub fn inf_norm(&self) -> f64 {
        let n = self.n();
        (0..n)
            .map(|i| {
                let mut s = self.diag[i].abs();
                if i > 0 {
                    s += self.offdiag[i - 1].abs();
                }
                if i + 1 < n {
                    s += self.offdiag[i].abs();
                }
                s
            })
            .fold(0.0, f64::max)
    }

    pub fn trace(&self) -> f64 {
        self.diag.iter().sum()
    }

    pub fn to_dense(&self) -> DMatrix<f64> {
        let n = self.n();
        let mut m = DMatrix::zeros(n, n);
        for i in 0..n {
            m[(i, i)] = self.diag[i];
            if i + 1 < n {
                m[(i, i + 1)] = self.offdiag[i];
                m[(i + 1, i)] = self.offdiag[i];
            }
        }
        m
    }
}

/// The row-stochastic weight matrix of a path: off-diagonal `w`,
/// diagonal `1 - w_{i-1} - w_i` so each row sums to one.
pub fn weight_matrix(net: &PathNetwork, w: &WeightAssignment) -> Result<TridiagonalMatrix> {
    let n = net.node_count();
    if w.edge_count() != n - 1 {
        return Err(Error::validation(format!(
            "expected {} edge weights for a path on {n} nodes, got {}",
            n - 1,
            w.edge_count()
        )));
    }
    let wv = w.values();
    let mut diag = Vec::with_capacity(n);
    diag.push(1.0 - wv[0]);
    for i in 1..n - 1 {
        diag.push(1.0 - wv[i - 1] - wv[i]);
    }
    diag.push(1.0 - wv[n - 2]);
    TridiagonalMatrix::new(diag, wv.to_vec())
}

/// Unit edge-difference vector for edge `i` (1-based): `1/sqrt(2)` at node
/// `i`, `-1/sqrt(2)` at node `i+1`, zero elsewhere.
pub fn basis_vector(n: usize, i: usize) -> Result<Vec<f64>> {
    if n < 2 {
        return Err(Error::validation(format!("basis vector needs n >= 2, got {n}")));
    }
    if i < 1 || i > n - 1 {
        return Err(Error::validation(format!(
            "edge index {i} out of range 1..={}",
            n - 1
        )));
    }
    let mut v = vec![0.0; n];
    v[i - 1] = INV_SQRT_2;
    v[i] = -INV_SQRT_2;
    Ok(v)
}

/// Inner product of the edge-`i` basis vector with `x`: `(x[i-1] - x[i]) / sqrt(2)`
/// in 0-based indexing of `x`.
pub fn edge_difference(x: &[f64], i: usize) -> f64 {
    (x[i - 1] - x[i]) * INV_SQRT_2
}

/// Assemble the weight matrix as `I - sum_i 2 w_i a_i a_i^T` through a dense
/// intermediate, then demote to tridiagonal form.
///
/// The dense route rounds differently from [`weight_matrix`], which is what
/// makes agreement between the two a meaningful check.
pub fn matrix_from_expansion(n: usize, w: &WeightAssignment) -> Result<TridiagonalMatrix> {
    let net = build_path(n)?;
    if w.edge_count() != net.edge_count() {
        return Err(Error::validation(format!(
            "expected {} edge weights for a path on {n} nodes, got {}",
            net.edge_count(),
            w.edge_count()
        )));
    }
    let mut m = DMatrix::<f64>::identity(n, n);
    for (i, &wi) in w.values().iter().enumerate() {
        let a = basis_vector(n, i + 1)?;
        for r in i..=i + 1 {
            for c in i..=i + 1 {
                m[(r, c)] -= 2.0 * wi * a[r] * a[c];
            }
        }
    }
    // Anything beyond the first off-diagonal must be numerically zero.
    let mut worst = 0.0f64;
    for r in 0..n {
        for c in 0..n {
            if r.abs_diff(c) >= 2 {
                worst = worst.max(m[(r, c)].abs());
            }
        }
    }
    if worst > 1e-14 {
        return Err(Error::Inconsistency {
            what: "rank-one expansion produced a non-tridiagonal matrix".into(),
            residual: worst,
        });
    }
    let diag = (0..n).map(|i| m[(i, i)]).collect();
    let offdiag = (0..n - 1).map(|i| m[(i, i + 1)]).collect();
    TridiagonalMatrix::new(diag, offdiag)
}

/// Gram matrix of the edge basis vectors: ones on the diagonal, -1/2 on the
/// first off-diagonals.
pub fn gram_matrix(n: usize) -> Result<DMatrix<f64>> {
    let net = build_path(n)?;
    let m = net.edge_count();
    let mut g = DMatrix::zeros(m, m);
    for i in 0..m {
        g[(i, i)] = 1.0;
        if i + 1 < m {
            g[(i, i + 1)] = -0.5;
            g[(i + 1, i)] = -0.5;
        }
    }
    Ok(g)
}
