//! Least-squares kernel and the per-test-asset nodewise regression system.
//!
//! For test asset `j` the design vector is
//! `x_t = (r2_j - r1_1, 1, r1_1, r1_2 - r1_1, ..., r1_K - r1_1)`.
//! Regressing coordinates 1, 2 and 3 on the remaining `K + 1` coordinates
//! yields residual series whose cross moments vanish exactly when the
//! test asset's alpha (coordinate 2) or delta (coordinate 3) is zero.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::linalg::Qr;
use crate::panel::ReturnPanel;

/// Relative residual norm under which the first nodewise regression is
/// treated as an exact fit.
const EXACT_FIT_TOLERANCE: f64 = 1e-10;

#[derive(Debug, Clone, PartialEq)]
pub struct LeastSquaresFit {
    pub coefficients: DVector<f64>,
    pub residuals: DVector<f64>,
    /// `(1/T) sum v_t^2`.
    pub residual_second_moment: f64,
}

/// Ordinary least squares of `y` on the columns of `x` via Householder QR.
pub fn solve_least_squares(x: &DMatrix<f64>, y: &DVector<f64>) -> Result<LeastSquaresFit> {
    if x.nrows() != y.len() {
        return Err(Error::DimensionMismatch(format!(
            "design has {} rows but response has {} entries",
            x.nrows(),
            y.len()
        )));
    }
    let qr = Qr::new(x)?;
    let coefficients = qr.coefficients(y);
    let residuals = y - x * &coefficients;
    let residual_second_moment = residuals.norm_squared() / y.len() as f64;
    Ok(LeastSquaresFit { coefficients, residuals, residual_second_moment })
}

/// `T x (K + 2)` matrix whose row `t` is the design vector of test asset `j`
/// (0-based).
pub fn build_design_vectors(panel: &ReturnPanel, j: usize) -> Result<DMatrix<f64>> {
    let y = panel.test_asset(j)?;
    let t = panel.periods();
    let k = panel.benchmark_count();
    let r11 = panel.benchmark(0);
    let mut x = DMatrix::zeros(t, k + 2);
    for s in 0..t {
        let base = r11[s];
        x[(s, 0)] = y[s] - base;
        x[(s, 1)] = 1.0;
        x[(s, 2)] = base;
        for b in 1..k {
            x[(s, 2 + b)] = panel.returns()[(s, b)] - base;
        }
    }
    Ok(x)
}

/// Residual series and coefficients of the first three nodewise regressions
/// for one test asset.
#[derive(Debug, Clone, PartialEq)]
pub struct NodewiseResiduals {
    /// Coefficients of coordinate 1 on `(x2, x3, x4, ...)`.
    pub theta1: DVector<f64>,
    /// Coefficients of coordinate 2 on `(x1, x3, x4, ...)`.
    pub theta2: DVector<f64>,
    /// Coefficients of coordinate 3 on `(x1, x2, x4, ...)`.
    pub theta3: DVector<f64>,
    pub v1: DVector<f64>,
    pub v2: DVector<f64>,
    pub v3: DVector<f64>,
    pub g1_sq: f64,
    pub g2_sq: f64,
    pub g3_sq: f64,
    /// The test asset lies exactly in the span of the benchmark design, so
    /// `v1` is identically zero. Regressions 2 and 3 then drop `x1`, whose
    /// coefficient is reported as zero.
    pub exact_fit: bool,
}

impl NodewiseResiduals {
    /// Intercept of the auxiliary regression of `r2_j - r1_1` on
    /// `(1, r1_1, spreads)`.
    pub fn alpha_hat(&self) -> f64 {
        self.theta1[0]
    }

    /// `delta_j = 1 - sum_k beta_jk`, i.e. minus the slope on `r1_1` in the
    /// auxiliary regression.
    pub fn delta_hat(&self) -> f64 {
        -self.theta1[1]
    }

    pub fn periods(&self) -> usize {
        self.v1.len()
    }
}

fn drop_column(x: &DMatrix<f64>, col: usize) -> DMatrix<f64> {
    x.clone().remove_column(col)
}

/// Runs the three nodewise regressions that define the alpha and delta
/// moment conditions of test asset `j` (0-based).
pub fn nodewise_fit(panel: &ReturnPanel, j: usize) -> Result<NodewiseResiduals> {
    let k = panel.benchmark_count();
    let t = panel.periods();
    if t < k + 2 {
        return Err(Error::InsufficientSample(format!(
            "nodewise regressions need T >= K + 2 = {}, got T = {t}",
            k + 2
        )));
    }
    let x = build_design_vectors(panel, j)?;
    nodewise_from_design(&x)
}

pub(crate) fn nodewise_from_design(x: &DMatrix<f64>) -> Result<NodewiseResiduals> {
    let t = x.nrows() as f64;
    let x1: DVector<f64> = x.column(0).into_owned();
    let x2: DVector<f64> = x.column(1).into_owned();
    let x3: DVector<f64> = x.column(2).into_owned();

    let fit1 = solve_least_squares(&drop_column(x, 0), &x1)?;
    let scale = x1.norm();
    let exact_fit = scale == 0.0 || fit1.residuals.norm() <= EXACT_FIT_TOLERANCE * scale;

    let (fit2, fit3) = if exact_fit {
        // x1 is collinear with the other coordinates; regress on the rest.
        let rest = x.columns(1, x.ncols() - 1).into_owned();
        let f2 = solve_least_squares(&drop_column(&rest, 0), &x2)?;
        let f3 = solve_least_squares(&drop_column(&rest, 1), &x3)?;
        let pad = |f: LeastSquaresFit| {
            let mut c = DVector::zeros(f.coefficients.len() + 1);
            c.rows_mut(1, f.coefficients.len()).copy_from(&f.coefficients);
            LeastSquaresFit { coefficients: c, ..f }
        };
        (pad(f2), pad(f3))
    } else {
        (
            solve_least_squares(&drop_column(x, 1), &x2)?,
            solve_least_squares(&drop_column(x, 2), &x3)?,
        )
    };

    let v1 = if exact_fit { DVector::zeros(x1.len()) } else { fit1.residuals };
    let g1_sq = v1.norm_squared() / t;
    Ok(NodewiseResiduals {
        theta1: fit1.coefficients,
        theta2: fit2.coefficients,
        theta3: fit3.coefficients,
        v1,
        v2: fit2.residuals,
        v3: fit3.residuals,
        g1_sq,
        g2_sq: fit2.residual_second_moment,
        g3_sq: fit3.residual_second_moment,
        exact_fit,
    })
}

/// Coordinates 1-3 of one asset after partialling out the shared spreads,
/// with the spread coefficients each one carried.
struct Reduced {
    z: [DVector<f64>; 3],
    c: [DVector<f64>; 3],
    norms: [f64; 3],
}

/// Regression of reduced coordinate `i` on reduced coordinates `others`,
/// with coefficients in full design order. A coordinate left out as
/// `absent` gets a zero coefficient.
fn reduced_fit(r: &Reduced, i: usize, others: &[usize], absent: Option<usize>) -> Result<LeastSquaresFit> {
    let t = r.z[i].len();
    for &o in others {
        if r.z[o].norm() < crate::linalg::RANK_TOLERANCE * r.norms[o] {
            return Err(Error::RankDeficient { ratio: r.z[o].norm() / r.norms[o] });
        }
    }
    let x = DMatrix::from_fn(t, others.len(), |s, c| r.z[others[c]][s]);
    let qr = Qr::new(&x)?;
    let b = qr.coefficients(&r.z[i]);
    let residuals = qr.residual_vector(&r.z[i]);
    let mut spread = r.c[i].clone();
    for (bo, &o) in b.iter().zip(others) {
        spread -= &r.c[o] * *bo;
    }
    let mut coefficients = Vec::with_capacity(2 + spread.len());
    for o in (0..3).filter(|&o| o != i) {
        if Some(o) == absent {
            coefficients.push(0.0);
        } else {
            let pos = others.iter().position(|&x| x == o).expect("coordinate present");
            coefficients.push(b[pos]);
        }
    }
    coefficients.extend(spread.iter());
    let residual_second_moment = residuals.norm_squared() / t as f64;
    Ok(LeastSquaresFit { coefficients: DVector::from_vec(coefficients), residuals, residual_second_moment })
}

/// [`nodewise_fit`] for every test asset at once. The spread columns are
/// common to all designs, so they are projected out a single time and each
/// asset only needs regressions among its first three reduced coordinates.
pub fn panel_nodewise_fits(panel: &ReturnPanel) -> Result<Vec<NodewiseResiduals>> {
    let k = panel.benchmark_count();
    let t = panel.periods();
    if t < k + 2 {
        return Err(Error::InsufficientSample(format!(
            "nodewise regressions need T >= K + 2 = {}, got T = {t}",
            k + 2
        )));
    }
    let r = panel.returns();
    let r11 = panel.benchmark(0);
    let spreads = DMatrix::from_fn(t, k - 1, |s, b| r[(s, b + 1)] - r11[s]);
    let qs = Qr::new(&spreads)?;
    let reduce = |v: DVector<f64>| {
        let c = qs.coefficients(&v);
        let z = &v - &spreads * &c;
        (z, c, v.norm())
    };
    let (z2, c2, n2) = reduce(DVector::from_element(t, 1.0));
    let (z3, c3, n3) = reduce(r11.clone());

    (0..panel.test_count())
        .map(|j| {
            let x1 = panel.test_asset(j)? - &r11;
            let (z1, c1, n1) = reduce(x1);
            let red = Reduced { z: [z1, z2.clone(), z3.clone()], c: [c1, c2.clone(), c3.clone()], norms: [n1, n2, n3] };
            let fit1 = reduced_fit(&red, 0, &[1, 2], None)?;
            let exact_fit = n1 == 0.0 || fit1.residuals.norm() <= EXACT_FIT_TOLERANCE * n1;
            let (fit2, fit3) = if exact_fit {
                (reduced_fit(&red, 1, &[2], Some(0))?, reduced_fit(&red, 2, &[1], Some(0))?)
            } else {
                (reduced_fit(&red, 1, &[0, 2], None)?, reduced_fit(&red, 2, &[0, 1], None)?)
            };
            let v1 = if exact_fit { DVector::zeros(t) } else { fit1.residuals };
            let g1_sq = v1.norm_squared() / t as f64;
            Ok(NodewiseResiduals {
                theta1: fit1.coefficients,
                theta2: fit2.coefficients,
                theta3: fit3.coefficients,
                v1,
                v2: fit2.residuals,
                v3: fit3.residuals,
                g1_sq,
                g2_sq: fit2.residual_second_moment,
                g3_sq: fit3.residual_second_moment,
                exact_fit,
            })
        })
        .collect()
}

/// All `d` nodewise regressions of a `T x d` sample.
#[derive(Debug, Clone)]
pub struct NodewiseSystem {
    /// `theta[(i, m)]` is the coefficient on coordinate `m` when regressing
    /// coordinate `i` on the others; the diagonal is zero.
    pub theta: DMatrix<f64>,
    /// Residual second moments `g_i^2` (1/T convention).
    pub g_sq: DVector<f64>,
    /// `T x d` residual matrix.
    pub residuals: DMatrix<f64>,
}

impl NodewiseSystem {
    /// `G^{-1} (I - Theta)`, which equals the inverse of the uncentered
    /// second-moment matrix.
    pub fn precision(&self) -> DMatrix<f64> {
        let d = self.g_sq.len();
        let mut out = DMatrix::identity(d, d) - &self.theta;
        for i in 0..d {
            let g = self.g_sq[i];
            out.row_mut(i).scale_mut(1.0 / g);
        }
        out
    }

    /// `(I - Theta) G`, which equals the residual second-moment matrix.
    pub fn residual_covariance(&self) -> DMatrix<f64> {
        let d = self.g_sq.len();
        let mut out = DMatrix::identity(d, d) - &self.theta;
        for m in 0..d {
            let g = self.g_sq[m];
            out.column_mut(m).scale_mut(g);
        }
        out
    }
}

pub fn nodewise_system(x: &DMatrix<f64>) -> Result<NodewiseSystem> {
    let (t, d) = x.shape();
    if d < 2 {
        return Err(Error::InvalidInput("nodewise system needs at least two coordinates".into()));
    }
    let mut theta = DMatrix::zeros(d, d);
    let mut g_sq = DVector::zeros(d);
    let mut residuals = DMatrix::zeros(t, d);
    for i in 0..d {
        let y = x.column(i).into_owned();
        let fit = solve_least_squares(&drop_column(x, i), &y)?;
        let mut c = 0;
        for m in 0..d {
            if m != i {
                theta[(i, m)] = fit.coefficients[c];
                c += 1;
            }
        }
        g_sq[i] = fit.residual_second_moment;
        residuals.set_column(i, &fit.residuals);
    }
    Ok(NodewiseSystem { theta, g_sq, residuals })
}
