use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::distributions::{normal_quantile, normal_two_sided};
use crate::error::{Error, Result};
use crate::linalg::{hstack, Qr};
use crate::panel::ReturnPanel;
use crate::spanning::{Diagnostics, Hypothesis, PValue, TestOutcome};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NormalTestResult {
    pub test: String,
    pub hypothesis: Hypothesis,
    pub statistic: f64,
    pub p_value: f64,
    /// Thresholded mean squared residual correlation.
    pub rho_sq: f64,
    /// Threshold `theta_N`; `None` when `N = 1`.
    pub threshold: Option<f64>,
}

impl NormalTestResult {
    pub fn into_outcome(self) -> TestOutcome {
        TestOutcome {
            test: self.test,
            hypothesis: self.hypothesis,
            p: PValue::Point(self.p_value),
            per_asset_pvalues: Vec::new(),
            diagnostics: Diagnostics { statistic: Some(self.statistic), ..Diagnostics::default() },
        }
    }
}

/// `theta_N = Phi^{-1}(1 - level / (2 (N - 1)))^2`.
pub fn py_threshold(n: usize, level: f64) -> Option<f64> {
    if n < 2 {
        return None;
    }
    let q = normal_quantile(1.0 - level / (2.0 * (n as f64 - 1.0)));
    Some(q * q)
}

/// The PY standardized statistic from per-asset intercept t-statistics.
pub fn py_statistic(t_sq: &[f64], v: f64, rho_sq: f64) -> f64 {
    let n = t_sq.len() as f64;
    let centre = v / (v - 2.0);
    let num: f64 = t_sq.iter().map(|t| t - centre).sum::<f64>() / n.sqrt();
    let den = centre * (2.0 * (v - 1.0) / (v - 4.0) * (1.0 + (n - 1.0) * rho_sq)).sqrt();
    num / den
}

/// Pesaran-Yamagata test of `alpha = 0`, usable when `N > T`.
pub fn py_test(panel: &ReturnPanel, level: f64) -> Result<NormalTestResult> {
    let (t, k, n) = (panel.periods(), panel.benchmark_count(), panel.test_count());
    if t <= k + 5 {
        return Err(Error::InsufficientSample(format!("PY needs T > K + 5 (T = {t}, K = {k})")));
    }
    let x = hstack(&[&DMatrix::from_element(t, 1, 1.0), &panel.benchmarks()]);
    let qr = Qr::new(&x)?;
    let y = panel.tests();
    let resid = qr.residuals(&y);
    let coef_scale = qr.inverse_gram_diagonal(0);
    let v = (t - k - 1) as f64;

    // Intercepts: first row of R^{-1} Q'Y.
    let qty = qr.q().tr_mul(&y);
    let coefs = qr
        .r()
        .solve_upper_triangular(&qty)
        .expect("R has a nonzero diagonal after the rank check");

    let ssr: Vec<f64> = resid.column_iter().map(|c| c.norm_squared()).collect();
    if ssr.iter().any(|s| *s <= 0.0) {
        return Err(Error::SingularCovariance);
    }
    let t_sq: Vec<f64> = (0..n)
        .map(|i| {
            let alpha = coefs[(0, i)];
            alpha * alpha / (ssr[i] / v * coef_scale)
        })
        .collect();

    let threshold = py_threshold(n, level);
    let rho_sq = match threshold {
        None => 0.0,
        Some(theta) => {
            let mut acc = 0.0;
            for i in 1..n {
                for j in 0..i {
                    let g = resid.column(i).dot(&resid.column(j));
                    let r2 = g * g / (ssr[i] * ssr[j]);
                    if v * r2 >= theta {
                        acc += r2;
                    }
                }
            }
            2.0 * acc / (n as f64 * (n as f64 - 1.0))
        }
    };

    let statistic = py_statistic(&t_sq, v, rho_sq);
    Ok(NormalTestResult {
        test: "PY".into(),
        hypothesis: Hypothesis::Alpha,
        statistic,
        p_value: normal_two_sided(statistic),
        rho_sq,
        threshold,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn threshold_for_two_assets() {
        let q: f64 = 1.959_963_984_540_054;
        assert!((py_threshold(2, 0.05).unwrap() - q * q).abs() < 1e-8);
        assert!(py_threshold(1, 0.05).is_none());
    }

    #[test]
    fn centred_statistic_is_zero() {
        let v = 100.0;
        let t_sq = vec![v / (v - 2.0); 7];
        let s = py_statistic(&t_sq, v, 0.0);
        assert_eq!(s, 0.0);
        assert_eq!(normal_two_sided(s), 1.0);
    }

    #[test]
    fn needs_enough_periods() {
        let m = DMatrix::from_fn(7, 4, |i, j| ((i * 7 + j * 3) % 5) as f64 * 0.01 + (i * j) as f64 * 1e-3);
        let p = ReturnPanel::new(m, 2, None).unwrap();
        assert!(matches!(py_test(&p, 0.05), Err(Error::InsufficientSample(_))));
    }
}
