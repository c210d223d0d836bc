//! Simulation-based max-F test under reflective symmetry.
//!
//! Each equation `i` is tested with its own F statistic; the reference
//! distribution of `F_max = max_i F_i` is simulated by flipping the sign of
//! whole cross-sections of the constrained residuals. The liberal bound
//! plugs the constrained residuals in directly. The conservative bound
//! replaces the numerator by the full projection on the unrestricted design,
//! which bounds the statistic over all values of the nuisance coefficients.

use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{hstack, Qr};
use crate::panel::ReturnPanel;
use crate::spanning::{Diagnostics, Hypothesis, PValue, TestOutcome};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GlConfig {
    pub replications: usize,
    pub seed: u64,
}

impl Default for GlConfig {
    fn default() -> Self {
        GlConfig { replications: 500, seed: 0 }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct GlStatistics {
    pub per_equation: Vec<f64>,
    pub f_max: f64,
    pub liberal: f64,
    pub conservative: f64,
    pub replications: usize,
    /// Numerator and denominator degrees of freedom of each `F_i`.
    pub df: (f64, f64),
}

struct Layout {
    /// `p x T` transpose of the orthonormal basis of `[R, extra]`.
    qt: DMatrix<f64>,
    /// Constrained residuals `M_R Y`.
    resid: DMatrix<f64>,
    resid_sq: Vec<f64>,
    q: usize,
    dof: f64,
}

fn layout(panel: &ReturnPanel, hypothesis: Hypothesis) -> Result<Layout> {
    let t = panel.periods();
    let k = panel.benchmark_count();
    let one = DMatrix::from_element(t, 1, 1.0);
    let (y, restricted, extra) = match hypothesis {
        Hypothesis::Joint => {
            let r11 = panel.benchmark(0);
            let mut y = panel.tests();
            for mut col in y.column_iter_mut() {
                col -= &r11;
            }
            let r1 = panel.benchmarks();
            let mut spreads = r1.columns(1, k - 1).into_owned();
            for mut col in spreads.column_iter_mut() {
                col -= &r11;
            }
            let r11m = DMatrix::from_column_slice(t, 1, r11.as_slice());
            (y, spreads, hstack(&[&one, &r11m]))
        }
        Hypothesis::Alpha => (panel.tests(), panel.benchmarks(), one),
        Hypothesis::Delta => {
            return Err(Error::InvalidInput("GL is implemented for the alpha and joint nulls".into()))
        }
    };
    let p = restricted.ncols() + extra.ncols();
    if t <= p {
        return Err(Error::NotApplicable(format!("GL needs T > K + 1 (T = {t}, K = {k})")));
    }
    let u = hstack(&[&restricted, &extra]);
    let qr = Qr::new(&u)?;
    let qm = qr.q();
    let r_cols = restricted.ncols();
    // Householder QR keeps nested column spaces, so the leading columns of
    // Q span the restricted regressors.
    let resid = if r_cols == 0 {
        y.clone()
    } else {
        let qr_r = qm.columns(0, r_cols);
        &y - qr_r * qr_r.tr_mul(&y)
    };
    let resid_sq = resid.column_iter().map(|c| c.norm_squared()).collect();
    Ok(Layout {
        qt: qm.transpose(),
        resid,
        resid_sq,
        q: extra.ncols(),
        dof: (t - p) as f64,
    })
}

/// Plug-in and bound statistics for one response given `w = Q'z`.
fn equation_stats(w: &[f64], z_sq: f64, q: usize, dof: f64) -> (f64, f64) {
    let all: f64 = w.iter().map(|x| x * x).sum();
    if z_sq <= 0.0 {
        return (0.0, 0.0);
    }
    let tested: f64 = w[w.len() - q..].iter().map(|x| x * x).sum();
    let ssr_u = (z_sq - all).max(0.0);
    if ssr_u <= 1e-14 * z_sq {
        return (f64::INFINITY, f64::INFINITY);
    }
    let scale = dof / (q as f64 * ssr_u);
    (tested * scale, all * scale)
}

fn max_stats(w: &DMatrix<f64>, layout: &Layout, zero: &[bool]) -> (f64, f64, Vec<f64>) {
    let mut plug = Vec::with_capacity(w.ncols());
    let mut best = (0.0_f64, 0.0_f64);
    for (i, col) in w.column_iter().enumerate() {
        let (f, fb) = if zero[i] {
            (0.0, 0.0)
        } else {
            equation_stats(col.as_slice(), layout.resid_sq[i], layout.q, layout.dof)
        };
        best.0 = best.0.max(f);
        best.1 = best.1.max(fb);
        plug.push(f);
    }
    (best.0, best.1, plug)
}

pub fn gl_statistics(panel: &ReturnPanel, hypothesis: Hypothesis, config: &GlConfig) -> Result<GlStatistics> {
    if config.replications < 99 {
        return Err(Error::InvalidInput(format!(
            "GL needs at least 99 replications, got {}",
            config.replications
        )));
    }
    let lay = layout(panel, hypothesis)?;
    let t = panel.periods();
    let n = panel.test_count();
    let y_scale: Vec<f64> = panel.tests().column_iter().map(|c| c.norm_squared()).collect();
    // Equations whose constrained residual vanishes contribute F = 0.
    let zero: Vec<bool> = (0..n).map(|i| lay.resid_sq[i] <= 1e-24 * y_scale[i]).collect();

    let mut w = &lay.qt * &lay.resid;
    let (f_obs, _, per_equation) = max_stats(&w, &lay, &zero);

    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let mut signed = lay.qt.clone();
    let mut liberal_hits = 0usize;
    let mut conservative_hits = 0usize;
    for _ in 0..config.replications {
        for s in 0..t {
            let flip = rng.random::<bool>();
            let mut dst = signed.column_mut(s);
            if flip {
                dst.copy_from(&(-lay.qt.column(s)));
            } else {
                dst.copy_from(&lay.qt.column(s));
            }
        }
        signed.mul_to(&lay.resid, &mut w);
        let (fp, fb, _) = max_stats(&w, &lay, &zero);
        if fp > f_obs {
            liberal_hits += 1;
        }
        if fb >= f_obs {
            conservative_hits += 1;
        }
    }
    let r = config.replications as f64;
    Ok(GlStatistics {
        per_equation,
        f_max: f_obs,
        liberal: liberal_hits as f64 / r,
        conservative: (1.0 + conservative_hits as f64) / (r + 1.0),
        replications: config.replications,
        df: (lay.q as f64, lay.dof),
    })
}

/// GL test with a `[liberal, conservative]` p-value interval.
pub fn gl_test(panel: &ReturnPanel, hypothesis: Hypothesis, config: &GlConfig) -> Result<TestOutcome> {
    let s = gl_statistics(panel, hypothesis, config)?;
    Ok(TestOutcome {
        test: "GL".into(),
        hypothesis,
        p: PValue::Interval { low: s.liberal, high: s.conservative },
        per_asset_pvalues: Vec::new(),
        diagnostics: Diagnostics {
            seed: Some(config.seed),
            statistic: Some(s.f_max),
            df: Some(s.df),
            replications: Some(s.replications),
            ..Diagnostics::default()
        },
    })
}
