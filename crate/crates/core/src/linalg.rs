use nalgebra::{Cholesky, DMatrix, Dyn, SymmetricEigen};

use crate::error::{GpecError, Result};

/// Diagonal jitter values tried, in order, before giving up on a Gram matrix.
pub const JITTER_LADDER: [f64; 5] = [0.0, 1e-10, 1e-8, 1e-6, 1e-4];

/// Smallest accepted squared Cholesky pivot, relative to the largest diagonal entry.
pub const PIVOT_FLOOR: f64 = 1e-12;

/// Eigenvalues at or above this count as non-negative.
pub const PSD_TOLERANCE: f64 = -1e-8;

/// Cholesky factor that also rejects numerically singular matrices.
pub fn checked_cholesky(matrix: &DMatrix<f64>) -> Option<Cholesky<f64, Dyn>> {
    let scale = matrix.diagonal().iter().copied().fold(0.0, f64::max);
    if scale.is_nan() || scale <= 0.0 || matrix.iter().any(|v| !v.is_finite()) {
        return None;
    }
    let chol = Cholesky::new(matrix.clone())?;
    let l = chol.l_dirty();
    let floor = PIVOT_FLOOR * scale;
    (0..matrix.nrows())
        .all(|i| l[(i, i)] * l[(i, i)] >= floor)
        .then_some(chol)
}

/// Smallest jitter from [`JITTER_LADDER`] that makes `matrix + jitter I` factorizable.
pub fn factorize_with_jitter(matrix: &DMatrix<f64>) -> Result<(Cholesky<f64, Dyn>, f64)> {
    for &jitter in &JITTER_LADDER {
        let mut shifted = matrix.clone();
        for i in 0..shifted.nrows() {
            shifted[(i, i)] += jitter;
        }
        if let Some(chol) = checked_cholesky(&shifted) {
            return Ok((chol, jitter));
        }
    }
    Err(GpecError::NonPsdKernel {
        jitter: JITTER_LADDER[JITTER_LADDER.len() - 1],
    })
}

pub fn min_eigenvalue(matrix: &DMatrix<f64>) -> f64 {
    if matrix.nrows() == 0 {
        return f64::INFINITY;
    }
    SymmetricEigen::new(matrix.clone())
        .eigenvalues
        .iter()
        .copied()
        .fold(f64::INFINITY, f64::min)
}

pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}
