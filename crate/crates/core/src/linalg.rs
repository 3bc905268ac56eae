//! Dense eigenvalue helpers on small matrices.

use nalgebra::{DMatrix, Schur, SymmetricEigen};

use crate::error::{Error, Result};
use crate::model::Mat6;

const EIG_EPS: f64 = 1e-14;
const EIG_MAX_ITER: usize = 10_000;

pub fn to_dynamic(m: &Mat6) -> DMatrix<f64> {
    DMatrix::from_column_slice(6, 6, m.as_slice())
}

fn check_square(m: &DMatrix<f64>) -> Result<()> {
    if m.nrows() != m.ncols() {
        return Err(Error::Dimension {
            expected: m.nrows(),
            found: m.ncols(),
        });
    }
    if m.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite("matrix"));
    }
    Ok(())
}

/// Largest real part over the spectrum, via a real Schur decomposition.
pub fn spectral_abscissa(m: &DMatrix<f64>) -> Result<f64> {
    check_square(m)?;
    if m.nrows() == 0 {
        return Err(Error::Dimension {
            expected: 1,
            found: 0,
        });
    }
    let schur = Schur::try_new(m.clone(), EIG_EPS, EIG_MAX_ITER).ok_or(Error::EigenNonConvergence)?;
    Ok(schur
        .complex_eigenvalues()
        .iter()
        .map(|l| l.re)
        .fold(f64::NEG_INFINITY, f64::max))
}

pub fn spectral_abscissa6(m: &Mat6) -> Result<f64> {
    spectral_abscissa(&to_dynamic(m))
}

/// Largest absolute difference between `m` and its transpose.
pub fn asymmetry(m: &DMatrix<f64>) -> f64 {
    let n = m.nrows();
    let mut worst = 0.0f64;
    for i in 0..n {
        for j in (i + 1)..n {
            worst = worst.max((m[(i, j)] - m[(j, i)]).abs());
        }
    }
    worst
}

pub fn require_symmetric(m: &DMatrix<f64>, tol: f64) -> Result<()> {
    check_square(m)?;
    let a = asymmetry(m);
    if a > tol {
        Err(Error::NotSymmetric(a))
    } else {
        Ok(())
    }
}

/// Ascending eigenvalues of a symmetric matrix.
pub fn symmetric_eigenvalues(m: &DMatrix<f64>) -> Result<Vec<f64>> {
    check_square(m)?;
    let sym = 0.5 * (m + m.transpose());
    let eig = SymmetricEigen::try_new(sym, EIG_EPS, EIG_MAX_ITER).ok_or(Error::EigenNonConvergence)?;
    let mut ev: Vec<f64> = eig.eigenvalues.iter().copied().collect();
    ev.sort_by(|a, b| a.total_cmp(b));
    Ok(ev)
}

pub fn lambda_min(m: &DMatrix<f64>) -> Result<f64> {
    symmetric_eigenvalues(m).map(|ev| ev[0])
}

pub fn lambda_max(m: &DMatrix<f64>) -> Result<f64> {
    symmetric_eigenvalues(m).map(|ev| *ev.last().unwrap())
}

/// Semidefiniteness threshold: eigenvalues down to `-1e-9 * ||M||` count as
/// nonnegative.
pub fn psd_tolerance(m: &DMatrix<f64>) -> f64 {
    1e-9 * m.norm().max(f64::MIN_POSITIVE)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn abscissa_of_diagonal() {
        let m = DMatrix::from_row_slice(2, 2, &[-1.0, 0.0, 0.0, -2.0]);
        assert_eq!(spectral_abscissa(&m).unwrap(), -1.0);
    }

    #[test]
    fn abscissa_of_rotation() {
        let m = DMatrix::from_row_slice(2, 2, &[0.0, 1.0, -1.0, 0.0]);
        assert!(spectral_abscissa(&m).unwrap().abs() < 1e-12);
    }

    #[test]
    fn rejects_non_square_and_nan() {
        let m = DMatrix::<f64>::zeros(2, 3);
        assert!(spectral_abscissa(&m).is_err());
        let mut m = DMatrix::<f64>::identity(3, 3);
        m[(1, 2)] = f64::NAN;
        assert!(spectral_abscissa(&m).is_err());
    }

    #[test]
    fn symmetric_extremes() {
        let m = DMatrix::from_row_slice(2, 2, &[2.0, 1.0, 1.0, 2.0]);
        assert!((lambda_min(&m).unwrap() - 1.0).abs() < 1e-12);
        assert!((lambda_max(&m).unwrap() - 3.0).abs() < 1e-12);
        assert!(require_symmetric(&m, 1e-12).is_ok());
        let a = DMatrix::from_row_slice(2, 2, &[2.0, 1.0, 0.0, 2.0]);
        assert!(matches!(require_symmetric(&a, 1e-12), Err(Error::NotSymmetric(_))));
    }
}
