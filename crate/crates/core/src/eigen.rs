//! Dense complex eigendecomposition: Schur form plus triangular
//! back-substitution for the right eigenvectors.

use nalgebra::{DMatrix, DVector};
use thiserror::Error;

use crate::mode_basis::C64;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum EigenError {
    #[error("matrix must be square, got {rows}x{cols}")]
    NotSquare { rows: usize, cols: usize },
    #[error("matrix contains non-finite entries")]
    NonFinite,
    #[error("Schur iteration did not converge (dimension {dim}, norm {norm:.3e}, condition estimate {condition:.3e})")]
    NoConvergence {
        dim: usize,
        norm: f64,
        condition: f64,
    },
}

/// Eigenvalues with unit-norm right eigenvectors (columns).
#[derive(Debug, Clone)]
pub struct Eigendecomposition {
    pub values: DVector<C64>,
    pub vectors: DMatrix<C64>,
}

const MAX_SCHUR_ITERATIONS: usize = 100_000;
/// Multiple of ε‖T‖ below which an off-diagonal Schur coupling between
/// equal eigenvalues is treated as rounding noise.
const COUPLING_FLOOR: f64 = 1e3;

pub fn eigendecompose(matrix: &DMatrix<C64>) -> Result<Eigendecomposition, EigenError> {
    let (rows, cols) = matrix.shape();
    if rows != cols {
        return Err(EigenError::NotSquare { rows, cols });
    }
    if matrix
        .iter()
        .any(|v| !v.re.is_finite() || !v.im.is_finite())
    {
        return Err(EigenError::NonFinite);
    }
    let n = rows;
    if n == 0 {
        return Ok(Eigendecomposition {
            values: DVector::zeros(0),
            vectors: DMatrix::zeros(0, 0),
        });
    }
    let schur =
        nalgebra::linalg::Schur::try_new(matrix.clone(), f64::EPSILON, MAX_SCHUR_ITERATIONS)
            .ok_or_else(|| EigenError::NoConvergence {
                dim: n,
                norm: matrix.norm(),
                condition: condition_estimate(matrix),
            })?;
    let (q, t) = schur.unpack();
    let values = t.diagonal();

    let t_norm = t.norm().max(f64::MIN_POSITIVE);
    let small = f64::EPSILON * t_norm;
    let mut y = DMatrix::<C64>::zeros(n, n);
    for k in 0..n {
        let lambda = t[(k, k)];
        y[(k, k)] = C64::new(1.0, 0.0);
        for j in (0..k).rev() {
            let mut acc = C64::new(0.0, 0.0);
            for l in j + 1..=k {
                acc += t[(j, l)] * y[(l, k)];
            }
            let mut denom = t[(j, j)] - lambda;
            if denom.norm() < small {
                // repeated eigenvalue with a coupling at rounding level: the
                // block is diagonal, keep the eigenvectors independent
                if acc.norm() < COUPLING_FLOOR * small {
                    y[(j, k)] = C64::new(0.0, 0.0);
                    continue;
                }
                // genuinely coalescing: perturb the pivot as LAPACK's trevc does
                denom = C64::new(small, 0.0);
            }
            y[(j, k)] = -acc / denom;
        }
    }
    let mut vectors = q * y;
    for mut col in vectors.column_iter_mut() {
        let norm = col.norm();
        if norm > 0.0 {
            col /= C64::new(norm, 0.0);
        }
    }
    Ok(Eigendecomposition { values, vectors })
}

/// Ratio of extreme singular values, ∞ for singular input.
pub fn condition_estimate(matrix: &DMatrix<C64>) -> f64 {
    let sv = matrix.clone().singular_values();
    let max = sv.iter().copied().fold(0.0, f64::max);
    let min = sv.iter().copied().fold(f64::INFINITY, f64::min);
    if min == 0.0 {
        f64::INFINITY
    } else {
        max / min
    }
}
