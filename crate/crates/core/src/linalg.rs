//! Dense kernels shared by the regression and classical-test modules.
//!
//! Everything is column-major `nalgebra` storage. Least squares goes through a
//! Householder QR factorization; covariance inverses go through Cholesky.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};

/// Relative tolerance on the diagonal of `R` below which a design is
/// declared rank deficient.
pub const RANK_TOLERANCE: f64 = 1e-10;

/// Thin Householder QR of a `T x q` design with an explicit rank check.
#[derive(Debug, Clone)]
pub struct Qr {
    q: DMatrix<f64>,
    r: DMatrix<f64>,
}

impl Qr {
    pub fn new(x: &DMatrix<f64>) -> Result<Self> {
        let (rows, cols) = x.shape();
        if cols == 0 {
            return Ok(Qr {
                q: DMatrix::zeros(rows, 0),
                r: DMatrix::zeros(0, 0),
            });
        }
        if rows < cols {
            return Err(Error::DimensionMismatch(format!(
                "least squares needs at least as many rows ({rows}) as columns ({cols})"
            )));
        }
        if x.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidInput("design matrix has non-finite entries".into()));
        }
        let qr = x.clone().qr();
        let r = qr.r();
        let diag: Vec<f64> = (0..cols).map(|i| r[(i, i)].abs()).collect();
        let largest = diag.iter().cloned().fold(0.0_f64, f64::max);
        let smallest = diag.iter().cloned().fold(f64::INFINITY, f64::min);
        if largest == 0.0 || smallest < RANK_TOLERANCE * largest {
            let ratio = if largest == 0.0 { 0.0 } else { smallest / largest };
            return Err(Error::RankDeficient { ratio });
        }
        Ok(Qr { q: qr.q(), r })
    }

    pub fn rows(&self) -> usize {
        self.q.nrows()
    }

    pub fn cols(&self) -> usize {
        self.q.ncols()
    }

    /// Orthonormal basis of the column space (`T x q`).
    pub fn q(&self) -> &DMatrix<f64> {
        &self.q
    }

    pub fn r(&self) -> &DMatrix<f64> {
        &self.r
    }

    /// Least-squares coefficients for a single response.
    pub fn coefficients(&self, y: &DVector<f64>) -> DVector<f64> {
        if self.cols() == 0 {
            return DVector::zeros(0);
        }
        let qty = self.q.tr_mul(y);
        self.r
            .solve_upper_triangular(&qty)
            .expect("R has a nonzero diagonal after the rank check")
    }

    /// Residual `y - P y` for every column of `y`.
    pub fn residuals(&self, y: &DMatrix<f64>) -> DMatrix<f64> {
        if self.cols() == 0 {
            return y.clone();
        }
        let fitted = &self.q * self.q.tr_mul(y);
        y - fitted
    }

    pub fn residual_vector(&self, y: &DVector<f64>) -> DVector<f64> {
        if self.cols() == 0 {
            return y.clone();
        }
        y - &self.q * self.q.tr_mul(y)
    }

    /// Diagonal element `[(X'X)^{-1}]_{ii}`.
    pub fn inverse_gram_diagonal(&self, i: usize) -> f64 {
        let q = self.cols();
        let mut e = DVector::zeros(q);
        e[i] = 1.0;
        // (X'X)^{-1} = R^{-1} R^{-T}; the i-th diagonal is |R^{-T} e_i|^2.
        let w = self
            .r
            .transpose()
            .solve_lower_triangular(&e)
            .expect("R has a nonzero diagonal after the rank check");
        w.norm_squared()
    }
}

/// Sample mean vector and 1/T covariance of the columns of `x`.
pub fn mean_and_covariance(x: &DMatrix<f64>) -> (DVector<f64>, DMatrix<f64>) {
    let t = x.nrows() as f64;
    let mean = x.row_mean().transpose();
    let mut centered = x.clone();
    for (j, mut col) in centered.column_iter_mut().enumerate() {
        col.add_scalar_mut(-mean[j]);
    }
    let cov = centered.tr_mul(&centered) / t;
    (mean, cov)
}

/// Cholesky factorization that reports singular covariances as an error.
pub fn cholesky(v: &DMatrix<f64>) -> Result<nalgebra::Cholesky<f64, nalgebra::Dyn>> {
    let chol = v.clone().cholesky().ok_or(Error::SingularCovariance)?;
    // nalgebra accepts matrices that are numerically semidefinite; reject
    // factors whose diagonal collapses relative to the largest pivot.
    let l = chol.l_dirty();
    let n = v.nrows();
    let largest = (0..n).map(|i| l[(i, i)].abs()).fold(0.0_f64, f64::max);
    let smallest = (0..n).map(|i| l[(i, i)].abs()).fold(f64::INFINITY, f64::min);
    if largest == 0.0 || smallest < 1e-7 * largest {
        return Err(Error::SingularCovariance);
    }
    Ok(chol)
}

/// `log |V|` from a Cholesky factor.
pub fn log_determinant(chol: &nalgebra::Cholesky<f64, nalgebra::Dyn>) -> f64 {
    let l = chol.l_dirty();
    2.0 * (0..l.nrows()).map(|i| l[(i, i)].ln()).sum::<f64>()
}

/// Horizontal concatenation of column blocks with the same row count.
pub fn hstack(blocks: &[&DMatrix<f64>]) -> DMatrix<f64> {
    let rows = blocks.first().map(|b| b.nrows()).unwrap_or(0);
    let cols = blocks.iter().map(|b| b.ncols()).sum();
    let mut out = DMatrix::zeros(rows, cols);
    let mut offset = 0;
    for b in blocks {
        debug_assert_eq!(b.nrows(), rows);
        out.columns_mut(offset, b.ncols()).copy_from(b);
        offset += b.ncols();
    }
    out
}
