//! Batch-mean Cauchy-combination spanning (BCS) tests.
//!
//! Pipeline: nodewise residuals (fitted once on the full sample) give `2N`
//! per-period moment series; each series is multiplied by a shared random
//! weight vector, cut into `B = floor(T^zeta)` consecutive blocks, and the
//! block means are t-tested against zero with `B - 1` degrees of freedom.
//! The per-series p-values are combined with the Cauchy combination rule
//! using equal weights.

use std::f64::consts::PI;
use std::fmt;
use std::ops::Range;
use std::str::FromStr;

use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::distributions::student_t_two_sided;
use crate::error::{Error, Result};
use crate::panel::ReturnPanel;
use crate::regression::{panel_nodewise_fits, NodewiseResiduals};

/// Variance floor below which a batch t-test is flagged as degenerate.
pub const DEGENERATE_VARIANCE: f64 = 1e-24;
/// p-values are clipped into `[P_CLIP, 1 - P_CLIP]` before the tangent
/// transform.
pub const P_CLIP: f64 = 1e-15;

/// The three spanning nulls.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Hypothesis {
    /// Tangency-portfolio spanning, `alpha = 0`.
    Alpha,
    /// Global minimum-variance spanning, `delta = 0`.
    Delta,
    /// Both, i.e. full mean-variance spanning.
    Joint,
}

impl Hypothesis {
    pub const ALL: [Hypothesis; 3] = [Hypothesis::Joint, Hypothesis::Alpha, Hypothesis::Delta];

    /// Rows of the `2N` moment matrix entering the combined test.
    pub fn moment_rows(self, n: usize) -> Range<usize> {
        match self {
            Hypothesis::Alpha => 0..n,
            Hypothesis::Delta => n..2 * n,
            Hypothesis::Joint => 0..2 * n,
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Hypothesis::Alpha => "alpha",
            Hypothesis::Delta => "delta",
            Hypothesis::Joint => "joint",
        }
    }
}

impl fmt::Display for Hypothesis {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Hypothesis {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "alpha" | "a" => Ok(Hypothesis::Alpha),
            "delta" | "d" => Ok(Hypothesis::Delta),
            "joint" | "ad" | "alpha-delta" | "alpha,delta" => Ok(Hypothesis::Joint),
            other => Err(Error::InvalidInput(format!("unknown hypothesis '{other}'"))),
        }
    }
}

/// `2N x T` moment matrix: row `j < N` is `v1 * v2` for test asset `j`,
/// row `N + j` is `v1 * v3`.
#[derive(Debug, Clone, PartialEq)]
pub struct MomentSeries {
    values: DMatrix<f64>,
}

impl MomentSeries {
    pub fn test_count(&self) -> usize {
        self.values.nrows() / 2
    }

    pub fn periods(&self) -> usize {
        self.values.ncols()
    }

    pub fn values(&self) -> &DMatrix<f64> {
        &self.values
    }

    pub fn row(&self, i: usize) -> Vec<f64> {
        self.values.row(i).iter().copied().collect()
    }

    pub fn row_mean(&self, i: usize) -> f64 {
        self.values.row(i).mean()
    }
}

pub fn moment_series(fits: &[NodewiseResiduals]) -> Result<MomentSeries> {
    let first = fits.first().ok_or(Error::EmptyInput)?;
    let t = first.periods();
    let n = fits.len();
    let mut values = DMatrix::zeros(2 * n, t);
    for (j, f) in fits.iter().enumerate() {
        for len in [f.v1.len(), f.v2.len(), f.v3.len()] {
            if len != t {
                return Err(Error::LengthMismatch { expected: t, found: len });
            }
        }
        for s in 0..t {
            values[(j, s)] = f.v1[s] * f.v2[s];
            values[(n + j, s)] = f.v1[s] * f.v3[s];
        }
    }
    Ok(MomentSeries { values })
}

/// Nodewise fits for every test asset of the panel, then their moments.
pub fn panel_moments(panel: &ReturnPanel) -> Result<MomentSeries> {
    moment_series(&panel_nodewise_fits(panel)?)
}

/// Partition of `1..T` into consecutive blocks plus the random-weight
/// configuration.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BatchPlan {
    pub zeta: f64,
    pub blocks: Vec<Range<usize>>,
    /// Number of `N(1, 1)` factors in each weight; 0 means unit weights.
    pub depth: usize,
    pub seed: u64,
}

impl BatchPlan {
    pub fn block_count(&self) -> usize {
        self.blocks.len()
    }

    pub fn periods(&self) -> usize {
        self.blocks.last().map(|b| b.end).unwrap_or(0)
    }

    /// The weight vector drawn from this plan's seed.
    pub fn weights(&self) -> Vec<f64> {
        let mut rng = ChaCha8Rng::seed_from_u64(self.seed);
        random_weights(self.periods(), self.depth, &mut rng)
    }
}

/// `floor(T^zeta)`, clamped to at least 2.
pub fn block_count(t: usize, zeta: f64) -> usize {
    // The small offset keeps exact powers (e.g. 216^(1/3)) from rounding down.
    let raw = ((t as f64).powf(zeta) + 1e-9).floor() as usize;
    raw.max(2)
}

pub fn make_batch_plan(t: usize, zeta: f64, depth: usize, seed: u64) -> Result<BatchPlan> {
    if t < 4 {
        return Err(Error::InsufficientSample(format!("batch means need T >= 4, got {t}")));
    }
    if !(zeta > 0.0 && zeta < 1.0) {
        return Err(Error::InvalidInput(format!("zeta must lie in (0, 1), got {zeta}")));
    }
    let b = block_count(t, zeta);
    let base = t / b;
    let remainder = t % b;
    let mut blocks = Vec::with_capacity(b);
    let mut start = 0;
    for i in 0..b {
        let len = base + usize::from(i < remainder);
        blocks.push(start..start + len);
        start += len;
    }
    Ok(BatchPlan { zeta, blocks, depth, seed })
}

/// `kappa_t = prod_{l <= L} kappa_{l,t}` with `kappa_{l,t} ~ N(1, 1)`.
pub fn random_weights<R: Rng + ?Sized>(t: usize, depth: usize, rng: &mut R) -> Vec<f64> {
    (0..t)
        .map(|_| {
            (0..depth).fold(1.0, |acc, _| {
                let z: f64 = rng.sample(StandardNormal);
                acc * (1.0 + z)
            })
        })
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Degeneracy {
    /// Zero batch variance with a nonzero mean: reported as `p = 0`.
    ZeroVariance,
    /// Zero variance and zero mean (e.g. an exactly spanned asset): `p = 1`.
    ZeroMoment,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SubseriesTTest {
    pub block_means: Vec<f64>,
    pub grand_mean: f64,
    pub variance: f64,
    pub t_stat: f64,
    pub p_value: f64,
    pub degenerate: Option<Degeneracy>,
}

pub fn batch_mean_ttest(series: &[f64], plan: &BatchPlan, weights: &[f64]) -> Result<SubseriesTTest> {
    let t = plan.periods();
    if series.len() != t {
        return Err(Error::LengthMismatch { expected: t, found: series.len() });
    }
    if weights.len() != t {
        return Err(Error::LengthMismatch { expected: t, found: weights.len() });
    }
    if series.iter().any(|v| !v.is_finite()) {
        return Err(Error::InvalidInput("moment series has non-finite values".into()));
    }
    let block_means: Vec<f64> = plan
        .blocks
        .iter()
        .map(|r| {
            let sum: f64 = r.clone().map(|s| series[s] * weights[s]).sum();
            sum / r.len() as f64
        })
        .collect();
    let b = block_means.len() as f64;
    let grand_mean = block_means.iter().sum::<f64>() / b;
    let variance = block_means.iter().map(|m| (m - grand_mean).powi(2)).sum::<f64>() / (b - 1.0);

    if variance < DEGENERATE_VARIANCE {
        let scale = series
            .iter()
            .zip(weights)
            .map(|(s, w)| (s * w).abs())
            .fold(0.0_f64, f64::max);
        let zero_mean = grand_mean.abs() <= 1e-14 * scale;
        let (t_stat, p_value, flag) = if zero_mean {
            (0.0, 1.0, Degeneracy::ZeroMoment)
        } else {
            (grand_mean.signum() * f64::INFINITY, 0.0, Degeneracy::ZeroVariance)
        };
        return Ok(SubseriesTTest {
            block_means,
            grand_mean,
            variance,
            t_stat,
            p_value,
            degenerate: Some(flag),
        });
    }

    let t_stat = b.sqrt() * grand_mean / variance.sqrt();
    let p_value = student_t_two_sided(t_stat, b - 1.0);
    Ok(SubseriesTTest { block_means, grand_mean, variance, t_stat, p_value, degenerate: None })
}

/// Cauchy combination `0.5 - atan(sum_j w_j tan((0.5 - p_j) pi)) / pi`.
pub fn cauchy_combine(pvals: &[f64], weights: &[f64]) -> Result<f64> {
    if pvals.is_empty() {
        return Err(Error::EmptyInput);
    }
    if weights.len() != pvals.len() {
        return Err(Error::LengthMismatch { expected: pvals.len(), found: weights.len() });
    }
    if weights.iter().any(|w| !(*w >= 0.0)) {
        return Err(Error::InvalidInput("combination weights must be nonnegative".into()));
    }
    let total: f64 = weights.iter().sum();
    if (total - 1.0).abs() > 1e-12 {
        return Err(Error::WeightSumViolation(total));
    }
    if pvals.iter().any(|p| !(0.0..=1.0).contains(p)) {
        return Err(Error::InvalidInput("p-values must lie in [0, 1]".into()));
    }
    let stat: f64 = pvals
        .iter()
        .zip(weights)
        .map(|(&p, &w)| w * ((0.5 - p.clamp(P_CLIP, 1.0 - P_CLIP)) * PI).tan())
        .sum();
    Ok(cauchy_tail(stat))
}

/// Equal-weight combination, `w_j = 1/d`.
pub fn cauchy_combine_equal(pvals: &[f64]) -> Result<f64> {
    let d = pvals.len();
    if d == 0 {
        return Err(Error::EmptyInput);
    }
    let w = vec![1.0 / d as f64; d];
    // Rounding of 1/d can leave the sum a few ulps from 1.
    let total: f64 = w.iter().sum();
    let w: Vec<f64> = w.iter().map(|x| x / total).collect();
    cauchy_combine(pvals, &w)
}

/// Upper tail of the standard Cauchy distribution.
fn cauchy_tail(x: f64) -> f64 {
    if x > 1.0 {
        // Avoids cancellation in 0.5 - atan(x)/pi for large x.
        (1.0 / x).atan() / PI
    } else {
        0.5 - x.atan() / PI
    }
}

/// Point p-value or, for bound-based tests, a `[liberal, conservative]`
/// interval.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum PValue {
    Point(f64),
    Interval { low: f64, high: f64 },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING-KEBAB-CASE")]
pub enum Decision {
    Reject,
    FailToReject,
    Inconclusive,
    #[serde(rename = "N/A")]
    NotApplicable,
}

impl Decision {
    pub fn label(self) -> &'static str {
        match self {
            Decision::Reject => "REJECT",
            Decision::FailToReject => "FAIL-TO-REJECT",
            Decision::Inconclusive => "INCONCLUSIVE",
            Decision::NotApplicable => "N/A",
        }
    }
}

impl fmt::Display for Decision {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.label())
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct Diagnostics {
    #[serde(skip_serializing_if = "Option::is_none")]
    pub blocks: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub depth: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub zeta: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
    /// Number of per-series t-tests flagged as degenerate.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub degenerate: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub statistic: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub df: Option<(f64, f64)>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub replications: Option<usize>,
}

/// Decision record of one test of one hypothesis.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TestOutcome {
    pub test: String,
    pub hypothesis: Hypothesis,
    pub p: PValue,
    pub per_asset_pvalues: Vec<f64>,
    pub diagnostics: Diagnostics,
}

impl TestOutcome {
    pub fn point(&self) -> Option<f64> {
        match self.p {
            PValue::Point(p) => Some(p),
            PValue::Interval { .. } => None,
        }
    }

    pub fn decision(&self, level: f64) -> Decision {
        match self.p {
            PValue::Point(p) if p < level => Decision::Reject,
            PValue::Point(_) => Decision::FailToReject,
            PValue::Interval { high, .. } if high < level => Decision::Reject,
            PValue::Interval { low, .. } if low < level => Decision::Inconclusive,
            PValue::Interval { .. } => Decision::FailToReject,
        }
    }

    pub fn is_inconclusive(&self, level: f64) -> bool {
        self.decision(level) == Decision::Inconclusive
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BcsConfig {
    pub zeta: f64,
    /// Weight depth `L`.
    pub depth: usize,
    pub seed: u64,
}

impl Default for BcsConfig {
    fn default() -> Self {
        BcsConfig { zeta: 1.0 / 3.0, depth: 2, seed: 0 }
    }
}

pub fn bcs_name(depth: usize, hypothesis: Hypothesis) -> String {
    format!("BCS{depth}-{hypothesis}")
}

/// Per-series batch t-tests for all `2N` moments under one plan and one
/// weight vector; any of the three hypotheses can then be read off.
#[derive(Debug, Clone)]
pub struct BcsAnalysis {
    pub plan: BatchPlan,
    pub series_tests: Vec<SubseriesTTest>,
    n: usize,
}

impl BcsAnalysis {
    pub fn new(panel: &ReturnPanel, config: &BcsConfig) -> Result<Self> {
        let moments = panel_moments(panel)?;
        Self::from_moments(&moments, config)
    }

    pub fn from_moments(moments: &MomentSeries, config: &BcsConfig) -> Result<Self> {
        let plan = make_batch_plan(moments.periods(), config.zeta, config.depth, config.seed)?;
        let weights = plan.weights();
        let series_tests = (0..moments.values.nrows())
            .map(|i| batch_mean_ttest(&moments.row(i), &plan, &weights))
            .collect::<Result<Vec<_>>>()?;
        Ok(BcsAnalysis { plan, series_tests, n: moments.test_count() })
    }

    pub fn outcome(&self, hypothesis: Hypothesis) -> TestOutcome {
        let rows = hypothesis.moment_rows(self.n);
        let selected = &self.series_tests[rows];
        let pvals: Vec<f64> = selected.iter().map(|s| s.p_value).collect();
        let p = cauchy_combine_equal(&pvals).expect("p-values come from the t-test and are in [0, 1]");
        TestOutcome {
            test: bcs_name(self.plan.depth, hypothesis),
            hypothesis,
            p: PValue::Point(p),
            per_asset_pvalues: pvals,
            diagnostics: Diagnostics {
                blocks: Some(self.plan.block_count()),
                depth: Some(self.plan.depth),
                zeta: Some(self.plan.zeta),
                seed: Some(self.plan.seed),
                degenerate: Some(selected.iter().filter(|s| s.degenerate.is_some()).count()),
                ..Diagnostics::default()
            },
        }
    }
}

pub fn bcs_test(panel: &ReturnPanel, hypothesis: Hypothesis, config: &BcsConfig) -> Result<TestOutcome> {
    Ok(BcsAnalysis::new(panel, config)?.outcome(hypothesis))
}
