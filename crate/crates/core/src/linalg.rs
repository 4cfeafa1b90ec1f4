//! Dense symmetric eigendecomposition helpers.
//!
//! All routines return eigenvalues in descending order. Ties keep the index
//! order produced by the underlying solver (stable sort), so repeated calls on
//! the same matrix give the same eigenvector basis.

use nalgebra::{DMatrix, SymmetricEigen};

use crate::error::{Error, Result};

/// Eigenpairs of a symmetric matrix, sorted by descending eigenvalue.
#[derive(Debug, Clone)]
pub struct SortedEigen {
    pub values: Vec<f64>,
    /// Column `i` is the unit eigenvector for `values[i]`.
    pub vectors: DMatrix<f64>,
}

fn descending_order(values: &[f64]) -> Vec<usize> {
    let mut order: Vec<usize> = (0..values.len()).collect();
    order.sort_by(|&a, &b| values[b].total_cmp(&values[a]));
    order
}

fn iteration_cap(n: usize) -> usize {
    (60 * n).max(1000)
}

pub fn symmetric_eigen(matrix: &DMatrix<f64>) -> Result<SortedEigen> {
    let n = matrix.nrows();
    let eig = SymmetricEigen::try_new(matrix.clone(), f64::EPSILON, iteration_cap(n))
        .ok_or_else(|| Error::Numeric(format!("symmetric eigensolver did not converge (n = {n})")))?;
    let order = descending_order(eig.eigenvalues.as_slice());
    let values: Vec<f64> = order.iter().map(|&i| eig.eigenvalues[i]).collect();
    let mut vectors = DMatrix::zeros(n, n);
    for (dst, &src) in order.iter().enumerate() {
        vectors.set_column(dst, &eig.eigenvectors.column(src));
    }
    if values.iter().any(|v| !v.is_finite()) {
        return Err(Error::Numeric("eigensolver produced non-finite eigenvalues".into()));
    }
    Ok(SortedEigen { values, vectors })
}

/// Eigenvalues only (no eigenvector accumulation), descending.
pub fn symmetric_eigenvalues(matrix: &DMatrix<f64>) -> Result<Vec<f64>> {
    if matrix.iter().any(|v| !v.is_finite()) {
        return Err(Error::Numeric("non-finite matrix passed to eigensolver".into()));
    }
    let mut values: Vec<f64> = matrix.symmetric_eigenvalues().iter().copied().collect();
    if values.iter().any(|v| !v.is_finite()) {
        return Err(Error::Numeric("eigensolver produced non-finite eigenvalues".into()));
    }
    values.sort_by(|a, b| b.total_cmp(a));
    Ok(values)
}

/// `(A + Aᵀ) / 2`.
pub fn symmetrize(matrix: &DMatrix<f64>) -> DMatrix<f64> {
    let n = matrix.nrows();
    DMatrix::from_fn(n, n, |i, j| {
        if i == j {
            matrix[(i, i)]
        } else {
            (matrix[(i, j)] + matrix[(j, i)]) / 2.0
        }
    })
}

/// `Tr(A · H · Hᵀ)` computed as `Σ_c h_cᵀ A h_c` without forming `HHᵀ`.
pub fn alignment(matrix: &DMatrix<f64>, h: &DMatrix<f64>) -> f64 {
    let ah = matrix * h;
    ah.iter().zip(h.iter()).map(|(a, b)| a * b).sum()
}

pub fn trace(matrix: &DMatrix<f64>) -> f64 {
    matrix.diagonal().iter().sum()
}
