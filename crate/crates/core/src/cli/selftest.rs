//! Exact algebraic identity suite behind `spanlab selftest`.
//!
//! The distribution kernels are injectable so a deliberately corrupted
//! kernel can be shown to fail the suite.

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use crate::distributions::{f_survival, student_t_cdf, student_t_two_sided};
use crate::dgp::{apply_toeplitz_factor, toeplitz_cholesky};
use crate::linalg::cholesky;
use crate::panel::ReturnPanel;
use crate::regression::{nodewise_fit, nodewise_system};
use crate::spanning::{batch_mean_ttest, cauchy_combine, cauchy_combine_equal, make_batch_plan};

#[derive(Clone, Copy)]
pub struct Kernels {
    pub t_cdf: fn(f64, f64) -> f64,
    pub t_two_sided: fn(f64, f64) -> f64,
}

impl Default for Kernels {
    fn default() -> Self {
        Kernels { t_cdf: student_t_cdf, t_two_sided: student_t_two_sided }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Check {
    pub name: &'static str,
    pub passed: bool,
    pub detail: String,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SelftestReport {
    pub checks: Vec<Check>,
}

impl SelftestReport {
    pub fn passed(&self) -> bool {
        self.checks.iter().all(|c| c.passed)
    }

    pub fn render(&self) -> String {
        let mut s = String::new();
        for c in &self.checks {
            let tag = if c.passed { "pass" } else { "FAIL" };
            s.push_str(&format!("[{tag}] {:<28} {}\n", c.name, c.detail));
        }
        let n_ok = self.checks.iter().filter(|c| c.passed).count();
        s.push_str(&format!("{n_ok}/{} checks passed\n", self.checks.len()));
        s
    }
}

// Student-t CDF values computed to 40 digits.
const T_REFERENCE: [(f64, f64, f64); 6] = [
    (0.5, 5.0, 0.680_850_564_179_535_5),
    (-1.3, 5.0, 0.125_150_317_085_338_6),
    (3.0, 3.0, 0.971_165_557_188_781_3),
    (1.0, 1.0, 0.75),
    (-0.2, 30.0, 0.421_415_078_529_662_3),
    (4.5, 10.0, 0.999_428_447_456_597_9),
];

fn check(name: &'static str, err: f64, tol: f64) -> Check {
    Check { name, passed: err.is_finite() && err <= tol, detail: format!("max error {err:.2e} (tol {tol:.0e})") }
}

fn failed(name: &'static str, detail: String) -> Check {
    Check { name, passed: false, detail }
}

fn gaussian(rows: usize, cols: usize, rng: &mut ChaCha8Rng) -> DMatrix<f64> {
    DMatrix::from_fn(rows, cols, |_, _| rng.sample::<f64, _>(StandardNormal))
}

fn t_reference(k: &Kernels) -> Check {
    let err = T_REFERENCE
        .iter()
        .map(|&(t, df, want)| ((k.t_cdf)(t, df) - want).abs())
        .fold(0.0, f64::max);
    check("t-cdf reference values", err, 1e-12)
}

fn t_tail_consistency(k: &Kernels) -> Check {
    let mut err = 0.0_f64;
    for m in [3.0, 9.0, 60.0] {
        for t in [0.3, 1.4, 2.6] {
            let two = (k.t_two_sided)(t, m);
            err = err.max((two - 2.0 * (1.0 - (k.t_cdf)(t, m))).abs());
            err = err.max((two - f_survival(t * t, 1.0, m)).abs());
        }
    }
    check("t tail vs F(1, m)", err, 1e-10)
}

fn batch_pvalues(k: &Kernels) -> Check {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let t = 125;
    let plan = match make_batch_plan(t, 1.0 / 3.0, 2, 5) {
        Ok(p) => p,
        Err(e) => return failed("batch-mean p-values", e.to_string()),
    };
    let w = plan.weights();
    let mut err = 0.0_f64;
    for _ in 0..4 {
        let series: Vec<f64> = (0..t).map(|_| 0.1 + rng.sample::<f64, _>(StandardNormal)).collect();
        let res = match batch_mean_ttest(&series, &plan, &w) {
            Ok(r) => r,
            Err(e) => return failed("batch-mean p-values", e.to_string()),
        };
        let b = plan.block_count() as f64;
        let means: Vec<f64> = plan
            .blocks
            .iter()
            .map(|r| r.clone().map(|s| series[s] * w[s]).sum::<f64>() / r.len() as f64)
            .collect();
        let mean = means.iter().sum::<f64>() / b;
        let var = means.iter().map(|m| (m - mean).powi(2)).sum::<f64>() / (b - 1.0);
        let tstat = b.sqrt() * mean / var.sqrt();
        err = err.max((res.t_stat - tstat).abs() / tstat.abs().max(1.0));
        err = err.max((res.p_value - (k.t_two_sided)(tstat, b - 1.0)).abs());
    }
    check("batch-mean p-values", err, 1e-10)
}

fn precision_identities() -> Check {
    let mut rng = ChaCha8Rng::seed_from_u64(21);
    let (t, k) = (90, 3);
    let b = gaussian(t, k, &mut rng);
    let noise = gaussian(t, 1, &mut rng);
    let y = DMatrix::from_fn(t, 1, |s, _| 0.2 + 0.6 * b[(s, 0)] + 0.3 * b[(s, 1)] + 0.5 * noise[(s, 0)]);
    let panel = match ReturnPanel::from_blocks(&b, &y) {
        Ok(p) => p,
        Err(e) => return failed("nodewise moment identities", e.to_string()),
    };
    let f = match nodewise_fit(&panel, 0) {
        Ok(f) => f,
        Err(e) => return failed("nodewise moment identities", e.to_string()),
    };
    let tf = t as f64;
    let m_alpha = f.v1.dot(&f.v2) / tf;
    let m_delta = f.v1.dot(&f.v3) / tf;
    let err = (m_alpha + f.alpha_hat() * f.g2_sq).abs().max((m_delta - f.delta_hat() * f.g3_sq).abs());
    check("nodewise moment identities", err, 1e-12)
}

fn precision_identity() -> Check {
    let mut rng = ChaCha8Rng::seed_from_u64(31);
    let x = gaussian(70, 5, &mut rng);
    let sys = match nodewise_system(&x) {
        Ok(s) => s,
        Err(e) => return failed("nodewise precision", e.to_string()),
    };
    let second = x.tr_mul(&x) / 70.0;
    let err = (sys.precision() * &second - DMatrix::identity(5, 5)).amax();
    check("nodewise precision", err, 1e-10)
}

fn cct_trivial() -> Check {
    let mut err = 0.0_f64;
    for p in [0.01, 0.2, 0.5, 0.93] {
        match (cauchy_combine(&[p], &[1.0]), cauchy_combine_equal(&[p, p, p])) {
            (Ok(a), Ok(b)) => err = err.max((a - p).abs()).max((b - p).abs()),
            _ => return failed("Cauchy combination", "unexpected error".into()),
        }
    }
    if cauchy_combine(&[0.1, 0.2], &[0.7, 0.7]).is_ok() {
        return failed("Cauchy combination", "accepted weights summing to 1.4".into());
    }
    check("Cauchy combination", err, 1e-12)
}

fn cholesky_reconstruction() -> Check {
    let mut err = 0.0_f64;
    for rho in [0.8, 0.5, -0.3] {
        let n = 7;
        let l = match toeplitz_cholesky(rho, n) {
            Ok(l) => l,
            Err(e) => return failed("Cholesky reconstruction", e.to_string()),
        };
        let target = DMatrix::from_fn(n, n, |i, j| rho.powi((i as i32 - j as i32).abs()));
        err = err.max((&l * l.transpose() - &target).amax());
        let z = DVector::from_fn(n, |i, _| (i as f64 * 0.7).sin());
        let mut fast = z.as_slice().to_vec();
        apply_toeplitz_factor(rho, &mut fast);
        err = err.max((&l * &z - DVector::from_vec(fast)).amax());
        match cholesky(&target) {
            Ok(c) => err = err.max((c.l() * c.l().transpose() - &target).amax()),
            Err(e) => return failed("Cholesky reconstruction", e.to_string()),
        }
    }
    check("Cholesky reconstruction", err, 1e-12)
}

pub fn run_selftest(k: &Kernels) -> SelftestReport {
    SelftestReport {
        checks: vec![
            t_reference(k),
            t_tail_consistency(k),
            batch_pvalues(k),
            precision_identities(),
            precision_identity(),
            cct_trivial(),
            cholesky_reconstruction(),
        ],
    }
}
