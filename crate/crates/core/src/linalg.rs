//! Small dense linear-algebra helpers on top of nalgebra.

use nalgebra::{Complex, DMatrix, Schur, SVD};

use crate::error::{Error, Result};

const MAX_ITER: usize = 10_000;

/// `‖A‖₂ = sqrt(λ_max(AᵀA))`, the largest singular value.
pub fn spectral_norm(a: &DMatrix<f64>) -> Result<f64> {
    if a.is_empty() {
        return Ok(0.0);
    }
    if a.iter().any(|x| !x.is_finite()) {
        return Err(Error::InvalidParameter("matrix has non-finite entries".into()));
    }
    let svd = SVD::try_new(a.clone(), false, false, f64::EPSILON, MAX_ITER).ok_or(Error::EigenFailure)?;
    Ok(svd.singular_values.max())
}

/// Maximum absolute column sum.
pub fn norm_1(a: &DMatrix<f64>) -> f64 {
    a.column_iter().map(|c| c.iter().map(|x| x.abs()).sum::<f64>()).fold(0.0, f64::max)
}

/// Maximum absolute row sum.
pub fn norm_inf(a: &DMatrix<f64>) -> f64 {
    a.row_iter().map(|r| r.iter().map(|x| x.abs()).sum::<f64>()).fold(0.0, f64::max)
}

/// All eigenvalues of a real square matrix via the real Schur form.
pub fn eigenvalues(a: &DMatrix<f64>) -> Result<Vec<Complex<f64>>> {
    if a.nrows() != a.ncols() {
        return Err(Error::DimensionMismatch { expected: a.nrows(), got: a.ncols() });
    }
    if a.iter().any(|x| !x.is_finite()) {
        return Err(Error::EigenFailure);
    }
    let schur = Schur::try_new(a.clone(), f64::EPSILON, MAX_ITER).ok_or(Error::EigenFailure)?;
    Ok(schur.complex_eigenvalues().iter().copied().collect())
}
