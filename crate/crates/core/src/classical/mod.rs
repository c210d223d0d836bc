//! Classical spanning tests: HK, GRS, F1, BJ, KM and F2 F-tests, the PY
//! large-N normal test and the GL simulation test.
//!
//! All sample covariances use the 1/T convention. Every F-based test is
//! guarded by `N + K <= T - 1`.

mod gl;
mod py;

pub use gl::{gl_statistics, gl_test, GlConfig, GlStatistics};
pub use py::{py_statistic, py_test, py_threshold, NormalTestResult};

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::distributions::f_survival;
use crate::error::{Error, Result};
use crate::linalg::{cholesky, hstack, log_determinant, mean_and_covariance, Qr};
use crate::panel::ReturnPanel;
use crate::spanning::{Diagnostics, Hypothesis, PValue, TestOutcome};

/// Efficient-frontier constants of the full universe and of the benchmark
/// block alone.
#[derive(Debug, Clone, PartialEq)]
pub struct EfficientSetConstants {
    pub a: f64,
    pub b: f64,
    pub c: f64,
    pub d: f64,
    pub a1: f64,
    pub b1: f64,
    pub c1: f64,
    pub d1: f64,
    pub mu_hat: DVector<f64>,
    pub v_hat: DMatrix<f64>,
}

fn frontier_abc(mu: &DVector<f64>, v: &DMatrix<f64>) -> Result<(f64, f64, f64)> {
    let chol = cholesky(v)?;
    let ones = DVector::from_element(mu.len(), 1.0);
    let v_inv_mu = chol.solve(mu);
    let v_inv_one = chol.solve(&ones);
    Ok((mu.dot(&v_inv_mu), mu.dot(&v_inv_one), ones.dot(&v_inv_one)))
}

impl EfficientSetConstants {
    pub fn new(panel: &ReturnPanel) -> Result<Self> {
        let k = panel.benchmark_count();
        let (mu_hat, v_hat) = mean_and_covariance(panel.returns());
        let (a, b, c) = frontier_abc(&mu_hat, &v_hat)?;
        let mu1 = mu_hat.rows(0, k).into_owned();
        let v11 = v_hat.view((0, 0), (k, k)).into_owned();
        let (a1, b1, c1) = frontier_abc(&mu1, &v11)?;
        Ok(EfficientSetConstants {
            a,
            b,
            c,
            d: a * c - b * b,
            a1,
            b1,
            c1,
            d1: a1 * c1 - b1 * b1,
            mu_hat,
            v_hat,
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FTestResult {
    pub test: String,
    pub hypothesis: Hypothesis,
    pub statistic: f64,
    pub df1: f64,
    pub df2: f64,
    pub p_value: f64,
}

impl FTestResult {
    fn new(test: &str, hypothesis: Hypothesis, statistic: f64, df1: f64, df2: f64) -> Self {
        FTestResult {
            test: test.to_string(),
            hypothesis,
            statistic,
            df1,
            df2,
            p_value: f_survival(statistic, df1, df2),
        }
    }

    pub fn into_outcome(self) -> TestOutcome {
        TestOutcome {
            test: self.test,
            hypothesis: self.hypothesis,
            p: PValue::Point(self.p_value),
            per_asset_pvalues: Vec::new(),
            diagnostics: Diagnostics {
                statistic: Some(self.statistic),
                df: Some((self.df1, self.df2)),
                ..Diagnostics::default()
            },
        }
    }
}

/// Shared applicability guard: the F tests need `N + K <= T - 1`.
pub fn f_tests_applicable(t: usize, k: usize, n: usize) -> bool {
    n + k < t
}

fn guard(panel: &ReturnPanel, test: &str) -> Result<(f64, f64, f64)> {
    let (t, k, n) = (panel.periods(), panel.benchmark_count(), panel.test_count());
    if !f_tests_applicable(t, k, n) {
        return Err(Error::NotApplicable(format!(
            "{test} needs N + K <= T - 1 (N = {n}, K = {k}, T = {t})"
        )));
    }
    Ok((t as f64, k as f64, n as f64))
}

fn ones(t: usize) -> DMatrix<f64> {
    DMatrix::from_element(t, 1, 1.0)
}

fn sum_squares(m: &DMatrix<f64>) -> f64 {
    m.norm_squared()
}

/// Huberman-Kandel joint test of `alpha = 0, delta = 0`.
pub fn hk_test(panel: &ReturnPanel) -> Result<FTestResult> {
    let (t, k, n) = guard(panel, "HK")?;
    let e = EfficientSetConstants::new(panel)?;
    let u = (e.c1 + e.d1) / (e.c + e.d);
    let res = if panel.test_count() >= 2 {
        let stat = (1.0 / u.sqrt() - 1.0) * (t - k - n) / n;
        FTestResult::new("HK", Hypothesis::Joint, stat, 2.0 * n, 2.0 * (t - k - n))
    } else {
        let stat = (1.0 / u - 1.0) * (t - k - 1.0) / 2.0;
        FTestResult::new("HK", Hypothesis::Joint, stat, 2.0, t - k - 1.0)
    };
    Ok(res)
}

/// Gibbons-Ross-Shanken determinant-ratio test of `alpha = 0`.
pub fn grs_test(panel: &ReturnPanel) -> Result<FTestResult> {
    let (t, k, n) = guard(panel, "GRS")?;
    let r1 = panel.benchmarks();
    let y = panel.tests();
    let e1 = Qr::new(&r1)?.residuals(&y);
    let e2 = Qr::new(&hstack(&[&ones(panel.periods()), &r1]))?.residuals(&y);
    let exact = |e: &DMatrix<f64>, j: usize| e.column(j).norm() <= 1e-10 * y.column(j).norm();
    let spanned = (0..panel.test_count()).filter(|&j| exact(&e2, j)).count();
    if spanned == panel.test_count() {
        // Exactly spanned test assets: zero alpha gives 0/0, read as no evidence.
        let all_zero = (0..panel.test_count()).all(|j| exact(&e1, j));
        let stat = if all_zero { 0.0 } else { f64::INFINITY };
        return Ok(FTestResult::new("GRS", Hypothesis::Alpha, stat, n, t - n - k));
    }
    if spanned > 0 {
        return Err(Error::SingularCovariance);
    }
    let gamma1 = e1.tr_mul(&e1) / t;
    let gamma2 = e2.tr_mul(&e2) / t;
    let ld1 = log_determinant(&cholesky(&gamma1)?);
    let ld2 = log_determinant(&cholesky(&gamma2)?);
    let stat = (t - n - k) / n * ((ld1 - ld2).exp() - 1.0);
    Ok(FTestResult::new("GRS", Hypothesis::Alpha, stat, n, t - n - k))
}

/// Kan-Zhou F1 test of `alpha = 0` from squared Sharpe ratios.
pub fn f1_test(panel: &ReturnPanel) -> Result<FTestResult> {
    let (t, k, n) = guard(panel, "F1")?;
    let e = EfficientSetConstants::new(panel)?;
    let stat = (t - k - n) / n * (e.a - e.a1) / (1.0 + e.a1);
    Ok(FTestResult::new("F1", Hypothesis::Alpha, stat, n, t - k - n))
}

/// Britten-Jones test: regress a constant on all returns without
/// intercept; the restricted model drops the test assets.
pub fn bj_test(panel: &ReturnPanel) -> Result<FTestResult> {
    let (t, k, n) = guard(panel, "BJ")?;
    let one = ones(panel.periods());
    let ssr_u = sum_squares(&Qr::new(panel.returns())?.residuals(&one));
    let ssr_r = sum_squares(&Qr::new(&panel.benchmarks())?.residuals(&one));
    let stat = (t - n - k) / n * (ssr_r - ssr_u) / ssr_u;
    Ok(FTestResult::new("BJ", Hypothesis::Alpha, stat, n, t - n - k))
}

/// Kempf-Memmel regression test of `delta = 0`.
pub fn km_test(panel: &ReturnPanel) -> Result<FTestResult> {
    let (t, k, n) = guard(panel, "KM")?;
    let periods = panel.periods();
    let r = panel.returns();
    let r11 = panel.benchmark(0);
    let cols = r.ncols();
    let mut spreads = DMatrix::zeros(periods, cols - 1);
    for j in 1..cols {
        for s in 0..periods {
            spreads[(s, j - 1)] = r11[s] - r[(s, j)];
        }
    }
    let y = DMatrix::from_column_slice(periods, 1, r11.as_slice());
    let one = ones(periods);
    let xu = hstack(&[&one, &spreads]);
    let kb = panel.benchmark_count();
    let xr = hstack(&[&one, &spreads.columns(0, kb - 1).into_owned()]);
    let ssr_u = sum_squares(&Qr::new(&xu)?.residuals(&y));
    let ssr_r = sum_squares(&Qr::new(&xr)?.residuals(&y));
    let stat = (t - n - k) / n * (ssr_r / ssr_u - 1.0);
    Ok(FTestResult::new("KM", Hypothesis::Delta, stat, n, t - n - k))
}

/// Kan-Zhou F2 test of `delta = 0`.
pub fn f2_test(panel: &ReturnPanel) -> Result<FTestResult> {
    let (t, k, n) = guard(panel, "F2")?;
    let e = EfficientSetConstants::new(panel)?;
    let ratio = ((e.c + e.d) / (e.c1 + e.d1)) * ((1.0 + e.a1) / (1.0 + e.a));
    let stat = (t - k - n + 1.0) / n * (ratio - 1.0);
    Ok(FTestResult::new("F2", Hypothesis::Delta, stat, n, t - k - n + 1.0))
}
