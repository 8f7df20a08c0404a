//! Small symmetric positive-definite solves with a conditioning guard.

use nalgebra::{DMatrix, DVector};

/// Below this reciprocal condition number a matrix is treated as singular.
pub const MIN_RCOND: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub(crate) enum Singular {
    NotPositiveDefinite,
    IllConditioned,
}

/// Ratio of smallest to largest eigenvalue of a symmetric matrix (0 if the
/// matrix is not positive definite).
pub fn reciprocal_condition(m: &DMatrix<f64>) -> f64 {
    let eig = m.clone().symmetric_eigen();
    let max = eig.eigenvalues.max();
    let min = eig.eigenvalues.min();
    if !(max > 0.0) || !(min > 0.0) {
        0.0
    } else {
        min / max
    }
}

/// Solve `m·x = rhs` for symmetric positive-definite `m`.
///
/// Returns the reciprocal condition number alongside the failure kind.
pub(crate) fn solve_spd(
    m: &DMatrix<f64>,
    rhs: &DVector<f64>,
) -> Result<DVector<f64>, (Singular, f64)> {
    let rcond = reciprocal_condition(m);
    if rcond == 0.0 {
        return Err((Singular::NotPositiveDefinite, rcond));
    }
    if rcond < MIN_RCOND {
        return Err((Singular::IllConditioned, rcond));
    }
    match m.clone().cholesky() {
        Some(ch) => Ok(ch.solve(rhs)),
        None => Err((Singular::NotPositiveDefinite, rcond)),
    }
}
