//! Thin wrapper around nalgebra's Cholesky factorization.
//!
//! Squared Mahalanobis distances are computed as `diff . solve(diff)` from
//! the factorization; the covariance inverse is never formed explicitly.
//! Cholesky success doubles as the SPD check for covariance matrices.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};

pub(crate) struct SpdFactor {
    chol: nalgebra::Cholesky<f64, nalgebra::Dyn>,
    dims: usize,
}

impl SpdFactor {
    /// Factor a d x d covariance given as rows. Fails when the matrix is not
    /// symmetric positive definite at working precision.
    pub fn new(cov: &[Vec<f64>]) -> Result<Self> {
        let d = cov.len();
        for (i, row) in cov.iter().enumerate() {
            if row.len() != d {
                return Err(Error::numeric(
                    "scoring",
                    format!("covariance row {i} has {} entries, expected {d}", row.len()),
                ));
            }
            if row.iter().any(|v| !v.is_finite()) {
                return Err(Error::numeric("scoring", "covariance contains non-finite entries"));
            }
        }
        let matrix = DMatrix::from_fn(d, d, |i, j| cov[i][j]);
        let chol = nalgebra::Cholesky::new(matrix).ok_or_else(|| {
            Error::numeric(
                "scoring",
                "covariance is not positive definite; increase the ridge regularization",
            )
        })?;
        Ok(SpdFactor { chol, dims: d })
    }

    /// Squared Mahalanobis distance of `diff` from the origin under the
    /// factored covariance.
    pub fn squared_mahalanobis(&self, diff: &[f64]) -> f64 {
        debug_assert_eq!(diff.len(), self.dims);
        let v = DVector::from_column_slice(diff);
        let solved = self.chol.solve(&v);
        // Exact arithmetic guarantees a non-negative quadratic form; rounding
        // can dip a hair below zero.
        v.dot(&solved).max(0.0)
    }
}
