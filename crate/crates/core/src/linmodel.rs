//! Ordinary least squares with coefficient inference and a multicollinearity flag.

use nalgebra::{DMatrix, DVector, SymmetricEigen};

use crate::error::{Error, Result};
use crate::numerics::student_t_two_sided_p;

/// Absolute threshold on the smallest eigenvalue of XᵀX below which a fit is
/// flagged singular. Not scaled by the size of X.
pub const SINGULARITY_THRESHOLD: f64 = 1e-10;

#[derive(Debug, Clone, PartialEq)]
pub struct OlsFit {
    pub coef: Vec<f64>,
    pub stderr: Vec<f64>,
    pub t_stat: Vec<f64>,
    pub p_value: Vec<f64>,
    /// Smallest eigenvalue of XᵀX, clamped at zero.
    pub min_eigenvalue: f64,
    /// `min_eigenvalue < SINGULARITY_THRESHOLD`. When set, the estimates come
    /// from a pseudo-inverse and should not be trusted.
    pub singular: bool,
    pub df_resid: usize,
    pub rss: f64,
}

/// Prepend a column of ones. The intercept becomes coefficient 0.
pub fn add_intercept(x: &DMatrix<f64>) -> DMatrix<f64> {
    x.clone().insert_column(0, 1.0)
}

/// Fit `y ~ X` by least squares. `X` must already contain any intercept column.
///
/// Full-rank fits are solved by Householder QR; singular ones fall back to the
/// SVD pseudo-inverse. A zero residual standard error gives infinite t
/// statistics and p-values of 0, except for coefficients that are exactly 0,
/// whose t and p are NaN.
pub fn fit_ols(x: &DMatrix<f64>, y: &DVector<f64>) -> Result<OlsFit> {
    let (n, k) = x.shape();
    if y.len() != n {
        return Err(Error::InvalidArgument(format!(
            "design has {n} rows but response has {}",
            y.len()
        )));
    }
    if n <= k {
        return Err(Error::InsufficientDf { n, k });
    }
    if x.iter().chain(y.iter()).any(|v| !v.is_finite()) {
        return Err(Error::InvalidArgument("non-finite value in OLS input".into()));
    }

    let xtx = x.tr_mul(x);
    let min_eigenvalue = if k == 0 {
        0.0
    } else {
        SymmetricEigen::new(xtx)
            .eigenvalues
            .iter()
            .copied()
            .fold(f64::INFINITY, f64::min)
            .max(0.0)
    };
    let singular = k > 0 && min_eigenvalue < SINGULARITY_THRESHOLD;

    // coefficients and the unscaled covariance diag((XᵀX)⁻¹)
    let (coef, cov_diag): (DVector<f64>, Vec<f64>) = if k == 0 {
        (DVector::zeros(0), Vec::new())
    } else if !singular {
        let qr = x.clone().qr();
        let r = qr.r();
        let mut qty = y.clone();
        qr.q_tr_mul(&mut qty);
        let qty = qty.rows(0, k).into_owned();
        let coef = r
            .solve_upper_triangular(&qty)
            .ok_or_else(|| Error::InvalidArgument("triangular solve failed".into()))?;
        let r_inv = r
            .solve_upper_triangular(&DMatrix::identity(k, k))
            .ok_or_else(|| Error::InvalidArgument("triangular solve failed".into()))?;
        let cov = (0..k).map(|j| r_inv.row(j).norm_squared()).collect();
        (coef, cov)
    } else {
        let svd = x.clone().svd(true, true);
        let tol = svd.singular_values.max() * (n.max(k) as f64) * f64::EPSILON;
        let pinv = svd
            .pseudo_inverse(tol)
            .map_err(|e| Error::InvalidArgument(e.to_owned()))?;
        let coef = &pinv * y;
        let cov = (0..k).map(|j| pinv.row(j).norm_squared()).collect();
        (coef, cov)
    };

    let resid = y - x * &coef;
    let rss = resid.norm_squared();
    let df_resid = n - k;
    let sigma2 = rss / df_resid as f64;

    let mut stderr = Vec::with_capacity(k);
    let mut t_stat = Vec::with_capacity(k);
    let mut p_value = Vec::with_capacity(k);
    for j in 0..k {
        let se = (sigma2 * cov_diag[j]).sqrt();
        let t = coef[j] / se;
        let p = if t.is_nan() {
            f64::NAN
        } else if t.is_infinite() {
            0.0
        } else {
            student_t_two_sided_p(t, df_resid as u64)?
        };
        stderr.push(se);
        t_stat.push(t);
        p_value.push(p);
    }

    Ok(OlsFit {
        coef: coef.iter().copied().collect(),
        stderr,
        t_stat,
        p_value,
        min_eigenvalue,
        singular,
        df_resid,
        rss,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn exact_interpolation() {
        let x = DMatrix::from_row_slice(3, 2, &[1.0, 0.0, 1.0, 1.0, 1.0, 2.0]);
        let y = DVector::from_vec(vec![0.0, 1.0, 2.0]);
        let fit = fit_ols(&x, &y).unwrap();
        assert!((fit.coef[0]).abs() < 1e-12 && (fit.coef[1] - 1.0).abs() < 1e-12);
        assert!(fit.rss < 1e-24);
        assert!(!fit.singular);
    }

    #[test]
    fn two_points_two_coefficients_has_no_df() {
        let x = DMatrix::from_row_slice(2, 2, &[1.0, 0.0, 1.0, 1.0]);
        let y = DVector::from_vec(vec![0.0, 1.0]);
        assert!(matches!(fit_ols(&x, &y), Err(Error::InsufficientDf { n: 2, k: 2 })));
    }

    #[test]
    fn duplicated_column_is_singular() {
        let x = DMatrix::from_row_slice(4, 3, &[
            1.0, 2.0, 2.0, //
            1.0, 3.0, 3.0, //
            1.0, 5.0, 5.0, //
            1.0, 7.0, 7.0,
        ]);
        let y = DVector::from_vec(vec![1.0, 2.0, 2.5, 4.0]);
        let fit = fit_ols(&x, &y).unwrap();
        assert!(fit.singular);
        assert!(fit.min_eigenvalue < SINGULARITY_THRESHOLD);
        // minimum-norm solution splits the slope evenly
        assert!((fit.coef[1] - fit.coef[2]).abs() < 1e-10);
    }

    #[test]
    fn intercept_prepended() {
        let x = DMatrix::from_row_slice(2, 1, &[5.0, 7.0]);
        assert_eq!(add_intercept(&x), DMatrix::from_row_slice(2, 2, &[1.0, 5.0, 1.0, 7.0]));
        let empty = DMatrix::<f64>::zeros(3, 0);
        assert_eq!(add_intercept(&empty), DMatrix::from_element(3, 1, 1.0));
        let ones = DMatrix::from_element(4, 1, 1.0);
        let both = add_intercept(&ones);
        let fit = fit_ols(&both, &DVector::from_vec(vec![1.0, 2.0, 3.0, 4.0])).unwrap();
        assert!(fit.singular);
    }

    #[test]
    fn rejects_non_finite() {
        let x = DMatrix::from_row_slice(3, 1, &[1.0, f64::NAN, 1.0]);
        assert!(fit_ols(&x, &DVector::from_vec(vec![1.0, 2.0, 3.0])).is_err());
    }

    #[test]
    fn zero_residual_gives_zero_p() {
        let x = DMatrix::from_row_slice(4, 2, &[1.0, 1.0, 1.0, 1.0, 1.0, 0.0, 1.0, 0.0]);
        let y = DVector::from_vec(vec![0.5, 0.5, 0.0, 0.0]);
        let fit = fit_ols(&x, &y).unwrap();
        assert!((fit.coef[1] - 0.5).abs() < 1e-12);
        assert!(fit.p_value[1] < 1e-10);
    }
}
