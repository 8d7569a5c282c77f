//! Small dense helpers that work for any [`Real`] scalar, plus symmetric
//! eigenvalue utilities for plain `f64` matrices.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::scalar::Real;

/// Matrix as written in a config file: either the diagonal or full rows.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum MatrixSpec {
    Diagonal(Vec<f64>),
    Rows(Vec<Vec<f64>>),
}

impl MatrixSpec {
    pub fn diagonal(entries: &[f64]) -> Self {
        MatrixSpec::Diagonal(entries.to_vec())
    }

    pub fn from_matrix(m: &DMatrix<f64>) -> Self {
        if m.is_square() && (0..m.nrows()).all(|i| (0..m.ncols()).all(|j| i == j || m[(i, j)] == 0.0)) {
            MatrixSpec::Diagonal(m.diagonal().iter().copied().collect())
        } else {
            MatrixSpec::Rows(m.row_iter().map(|r| r.iter().copied().collect()).collect())
        }
    }

    /// Builds the matrix and checks it is `n×n`.
    pub fn to_matrix(&self, key: &str, n: usize) -> Result<DMatrix<f64>> {
        let m = match self {
            MatrixSpec::Diagonal(d) => diag(d),
            MatrixSpec::Rows(rows) => {
                let ncols = rows.first().map_or(0, Vec::len);
                if rows.iter().any(|r| r.len() != ncols) {
                    return Err(Error::param(key, "rows have different lengths"));
                }
                DMatrix::from_row_iterator(rows.len(), ncols, rows.iter().flatten().copied())
            }
        };
        if m.nrows() != n || m.ncols() != n {
            return Err(Error::param(
                key,
                format!("expected a {n}x{n} matrix, got {}x{}", m.nrows(), m.ncols()),
            ));
        }
        if m.iter().any(|v| !v.is_finite()) {
            return Err(Error::param(key, "entries must be finite"));
        }
        Ok(m)
    }

    /// Like [`to_matrix`](Self::to_matrix) but also requires a symmetric
    /// positive-definite result.
    pub fn to_spd(&self, key: &str, n: usize) -> Result<DMatrix<f64>> {
        let m = self.to_matrix(key, n)?;
        if !is_symmetric(&m, 1e-12) {
            return Err(Error::param(key, "must be symmetric"));
        }
        if !is_positive_definite(&m) || lambda_min(&m) <= 0.0 {
            return Err(Error::param(key, "must be positive definite"));
        }
        Ok(m)
    }
}

/// Gauss-Jordan inverse with partial pivoting on the leading value.
/// Returns `None` when a pivot is numerically zero.
pub fn inverse<S: Real>(m: &DMatrix<S>) -> Option<DMatrix<S>> {
    let n = m.nrows();
    debug_assert_eq!(n, m.ncols());
    let scale = m.iter().fold(0.0_f64, |acc, v| acc.max(v.value().abs()));
    if scale == 0.0 || !scale.is_finite() {
        return None;
    }
    let mut a = m.clone();
    let mut inv = DMatrix::<S>::identity(n, n);
    for col in 0..n {
        let pivot_row = (col..n)
            .max_by(|&i, &j| {
                a[(i, col)]
                    .value()
                    .abs()
                    .total_cmp(&a[(j, col)].value().abs())
            })
            .expect("non-empty range");
        if a[(pivot_row, col)].value().abs() <= 1e-14 * scale {
            return None;
        }
        if pivot_row != col {
            a.swap_rows(pivot_row, col);
            inv.swap_rows(pivot_row, col);
        }
        let piv = a[(col, col)];
        for j in 0..n {
            a[(col, j)] /= piv;
            inv[(col, j)] /= piv;
        }
        for i in 0..n {
            if i == col {
                continue;
            }
            let f = a[(i, col)];
            if f.value() == 0.0 && f == S::zero() {
                continue;
            }
            for j in 0..n {
                let a_cj = a[(col, j)];
                let inv_cj = inv[(col, j)];
                a[(i, j)] -= f * a_cj;
                inv[(i, j)] -= f * inv_cj;
            }
        }
    }
    Some(inv)
}

pub fn mat_vec<S: Real>(m: &DMatrix<S>, v: &DVector<S>) -> DVector<S> {
    m * v
}

/// Block-diagonal assembly of square blocks.
pub fn block_diag<S: Real>(blocks: &[&DMatrix<S>]) -> DMatrix<S> {
    let n: usize = blocks.iter().map(|b| b.nrows()).sum();
    let mut out = DMatrix::<S>::zeros(n, n);
    let mut off = 0;
    for b in blocks {
        let k = b.nrows();
        out.view_mut((off, off), (k, k)).copy_from(b);
        off += k;
    }
    out
}

pub fn diag(entries: &[f64]) -> DMatrix<f64> {
    DMatrix::from_diagonal(&DVector::from_column_slice(entries))
}

/// Eigenvalues of the symmetric part of `m`, ascending.
pub fn sym_eigenvalues(m: &DMatrix<f64>) -> Vec<f64> {
    let sym = (m + m.transpose()) * 0.5;
    let mut ev: Vec<f64> = sym.symmetric_eigenvalues().iter().copied().collect();
    ev.sort_by(f64::total_cmp);
    ev
}

pub fn lambda_min(m: &DMatrix<f64>) -> f64 {
    sym_eigenvalues(m)[0]
}

pub fn lambda_max(m: &DMatrix<f64>) -> f64 {
    *sym_eigenvalues(m).last().expect("non-empty matrix")
}

pub fn is_symmetric(m: &DMatrix<f64>, tol: f64) -> bool {
    m.is_square() && (m - m.transpose()).amax() <= tol * (1.0 + m.amax())
}

pub fn is_positive_definite(m: &DMatrix<f64>) -> bool {
    m.is_square() && m.clone().cholesky().is_some()
}
