//! Size and power experiments over (DGP, K, N, a) cells.
//!
//! Every replication draws its panel from a seed derived from
//! `(master seed, DGP index, K, N, T, replication)`, so results do not
//! depend on thread scheduling and an `a = 0` power cell reproduces the
//! size cell exactly. All tests in a cell are evaluated on the same panels.

use std::fmt;
use std::str::FromStr;
use std::time::Instant;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::classical::{
    bj_test, f1_test, f2_test, f_tests_applicable, gl_test, grs_test, hk_test, km_test, py_test, GlConfig,
};
use crate::dgp::{catalog_entry, simulate_panel, DgpSpec};
use crate::error::{Error, Result};
use crate::panel::ReturnPanel;
use crate::report::CellResult;
use crate::spanning::{bcs_name, bcs_test, BcsConfig, Decision, Hypothesis, TestOutcome};

/// A test as named in configs and reports.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(try_from = "String", into = "String")]
pub enum TestSpec {
    Bcs { depth: usize, hypothesis: Hypothesis },
    Hk,
    Gl { hypothesis: Hypothesis },
    Grs,
    F1,
    Bj,
    Py,
    Km,
    F2,
}

impl fmt::Display for TestSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            TestSpec::Bcs { depth, hypothesis } => f.write_str(&bcs_name(*depth, *hypothesis)),
            TestSpec::Gl { hypothesis } => write!(f, "GL-{hypothesis}"),
            TestSpec::Hk => f.write_str("HK"),
            TestSpec::Grs => f.write_str("GRS"),
            TestSpec::F1 => f.write_str("F1"),
            TestSpec::Bj => f.write_str("BJ"),
            TestSpec::Py => f.write_str("PY"),
            TestSpec::Km => f.write_str("KM"),
            TestSpec::F2 => f.write_str("F2"),
        }
    }
}

impl FromStr for TestSpec {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let up = s.trim().to_ascii_uppercase();
        let simple = match up.as_str() {
            "HK" => Some(TestSpec::Hk),
            "GRS" => Some(TestSpec::Grs),
            "F1" => Some(TestSpec::F1),
            "BJ" => Some(TestSpec::Bj),
            "PY" => Some(TestSpec::Py),
            "KM" => Some(TestSpec::Km),
            "F2" => Some(TestSpec::F2),
            "GL" => Some(TestSpec::Gl { hypothesis: Hypothesis::Joint }),
            _ => None,
        };
        if let Some(t) = simple {
            return Ok(t);
        }
        let bad = || Error::InvalidInput(format!("unknown test '{s}'"));
        let (head, hyp) = up.split_once('-').ok_or_else(bad)?;
        let hypothesis: Hypothesis = hyp.parse().map_err(|_| bad())?;
        if head == "GL" {
            if hypothesis == Hypothesis::Delta {
                return Err(bad());
            }
            return Ok(TestSpec::Gl { hypothesis });
        }
        let depth = head.strip_prefix("BCS").ok_or_else(bad)?;
        let depth = if depth.is_empty() { 2 } else { depth.parse().map_err(|_| bad())? };
        Ok(TestSpec::Bcs { depth, hypothesis })
    }
}

impl TryFrom<String> for TestSpec {
    type Error = Error;
    fn try_from(s: String) -> Result<Self> {
        s.parse()
    }
}

impl From<TestSpec> for String {
    fn from(t: TestSpec) -> String {
        t.to_string()
    }
}

impl TestSpec {
    /// Whether the test can run at all for these dimensions.
    pub fn applicable(&self, t: usize, k: usize, n: usize) -> bool {
        match self {
            TestSpec::Bcs { .. } => t >= k + 2 && t >= 4,
            TestSpec::Gl { .. } => t > k + 1,
            TestSpec::Py => t > k + 5,
            _ => f_tests_applicable(t, k, n),
        }
    }

    pub fn is_interval(&self) -> bool {
        matches!(self, TestSpec::Gl { .. })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TestSettings {
    pub zeta: f64,
    pub level: f64,
    pub gl_replications: usize,
}

impl Default for TestSettings {
    fn default() -> Self {
        TestSettings { zeta: 1.0 / 3.0, level: 0.05, gl_replications: 500 }
    }
}

/// Anything the harness can apply to a simulated panel.
pub trait PanelTest: Send + Sync {
    fn name(&self) -> String;

    fn applicable(&self, _t: usize, _k: usize, _n: usize) -> bool {
        true
    }

    /// `true` for bound-based tests whose outcome may be inconclusive.
    fn reports_interval(&self) -> bool {
        false
    }

    fn evaluate(&self, panel: &ReturnPanel, seed: u64) -> Result<TestOutcome>;
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ConfiguredTest {
    pub spec: TestSpec,
    pub settings: TestSettings,
}

impl PanelTest for ConfiguredTest {
    fn name(&self) -> String {
        self.spec.to_string()
    }

    fn applicable(&self, t: usize, k: usize, n: usize) -> bool {
        self.spec.applicable(t, k, n)
    }

    fn reports_interval(&self) -> bool {
        self.spec.is_interval()
    }

    fn evaluate(&self, panel: &ReturnPanel, seed: u64) -> Result<TestOutcome> {
        let s = &self.settings;
        let mut out = match self.spec {
            TestSpec::Bcs { depth, hypothesis } => {
                bcs_test(panel, hypothesis, &BcsConfig { zeta: s.zeta, depth, seed })?
            }
            TestSpec::Gl { hypothesis } => {
                gl_test(panel, hypothesis, &GlConfig { replications: s.gl_replications, seed })?
            }
            TestSpec::Hk => hk_test(panel)?.into_outcome(),
            TestSpec::Grs => grs_test(panel)?.into_outcome(),
            TestSpec::F1 => f1_test(panel)?.into_outcome(),
            TestSpec::Bj => bj_test(panel)?.into_outcome(),
            TestSpec::Py => py_test(panel, s.level)?.into_outcome(),
            TestSpec::Km => km_test(panel)?.into_outcome(),
            TestSpec::F2 => f2_test(panel)?.into_outcome(),
        };
        out.test = self.name();
        Ok(out)
    }
}

fn default_dgps() -> Vec<String> {
    vec!["DGP1".into()]
}
fn default_t() -> usize {
    250
}
fn default_replications() -> usize {
    500
}
fn default_level() -> f64 {
    0.05
}
fn default_zeta() -> f64 {
    1.0 / 3.0
}
fn default_gl_replications() -> usize {
    199
}
fn default_burn_in() -> usize {
    500
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentGrid {
    #[serde(default = "default_dgps")]
    pub dgps: Vec<String>,
    #[serde(alias = "K_values")]
    pub k_values: Vec<usize>,
    #[serde(alias = "N_values")]
    pub n_values: Vec<usize>,
    #[serde(default = "default_t", alias = "T")]
    pub t: usize,
    #[serde(default = "default_replications")]
    pub replications: usize,
    #[serde(default = "default_level")]
    pub level: f64,
    pub tests: Vec<TestSpec>,
    /// Alternative magnitudes; empty means a size study.
    #[serde(default)]
    pub power_grid: Vec<f64>,
    #[serde(default)]
    pub seed: u64,
    #[serde(default = "default_zeta")]
    pub zeta: f64,
    #[serde(default = "default_gl_replications")]
    pub gl_replications: usize,
    #[serde(default = "default_burn_in")]
    pub burn_in: usize,
    /// Per-cell wall-time budget in seconds; replications stop (in chunks)
    /// once it is exceeded.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub time_budget_secs: Option<f64>,
}

impl ExperimentGrid {
    pub fn new(dgps: &[&str], k_values: &[usize], n_values: &[usize], tests: &[TestSpec]) -> Self {
        ExperimentGrid {
            dgps: dgps.iter().map(|s| s.to_string()).collect(),
            k_values: k_values.to_vec(),
            n_values: n_values.to_vec(),
            t: default_t(),
            replications: default_replications(),
            level: default_level(),
            tests: tests.to_vec(),
            power_grid: Vec::new(),
            seed: 0,
            zeta: default_zeta(),
            gl_replications: default_gl_replications(),
            burn_in: default_burn_in(),
            time_budget_secs: None,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let fail = |key: &str, msg: String| Err(Error::InvalidInput(format!("{key}: {msg}")));
        if self.dgps.is_empty() {
            return fail("dgps", "at least one DGP is required".into());
        }
        for (i, d) in self.dgps.iter().enumerate() {
            if catalog_entry(d).is_err() {
                return fail(&format!("dgps[{i}]"), format!("unknown DGP '{d}'"));
            }
        }
        if self.k_values.is_empty() || self.k_values.contains(&0) {
            return fail("k_values", "need a non-empty list of positive K".into());
        }
        if self.n_values.is_empty() || self.n_values.contains(&0) {
            return fail("n_values", "need a non-empty list of positive N".into());
        }
        if self.t < 4 {
            return fail("t", format!("T = {} is below 4", self.t));
        }
        if self.replications == 0 {
            return fail("replications", "must be at least 1".into());
        }
        if !(self.level > 0.0 && self.level < 1.0) {
            return fail("level", format!("{} is outside (0, 1)", self.level));
        }
        if !(self.zeta > 0.0 && self.zeta < 1.0) {
            return fail("zeta", format!("{} is outside (0, 1)", self.zeta));
        }
        if self.tests.is_empty() {
            return fail("tests", "at least one test is required".into());
        }
        if self.tests.iter().any(|t| t.is_interval()) && self.gl_replications < 99 {
            return fail("gl_replications", "GL needs at least 99 replications".into());
        }
        if let Some((i, a)) = self.power_grid.iter().enumerate().find(|(_, a)| !a.is_finite()) {
            return fail(&format!("power_grid[{i}]"), format!("{a} is not finite"));
        }
        if let Some(b) = self.time_budget_secs {
            if !(b > 0.0) {
                return fail("time_budget_secs", "must be positive".into());
            }
        }
        Ok(())
    }

    pub fn settings(&self) -> TestSettings {
        TestSettings { zeta: self.zeta, level: self.level, gl_replications: self.gl_replications }
    }

    pub fn configured_tests(&self) -> Vec<ConfiguredTest> {
        let settings = self.settings();
        self.tests.iter().map(|&spec| ConfiguredTest { spec, settings }).collect()
    }
}

fn splitmix(mut x: u64) -> u64 {
    x = x.wrapping_add(0x9E37_79B9_7F4A_7C15);
    let mut z = x;
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Order-sensitive hash of a key sequence.
pub fn derive_seed(parts: &[u64]) -> u64 {
    parts.iter().fold(0x5EED_0F_5EA5_u64, |acc, &p| splitmix(acc ^ splitmix(p)))
}

const TEST_STREAM: u64 = 0x7E57_7E57;

pub fn panel_seed(master: u64, dgp_index: usize, k: usize, n: usize, t: usize, rep: usize) -> u64 {
    derive_seed(&[master, dgp_index as u64, k as u64, n as u64, t as u64, rep as u64])
}

pub fn test_seed(panel_seed: u64) -> u64 {
    derive_seed(&[panel_seed, TEST_STREAM])
}

/// One (DGP, K, N, a) cell of an experiment.
#[derive(Debug, Clone, PartialEq)]
pub struct Cell {
    pub dgp_index: usize,
    pub spec: DgpSpec,
}

#[derive(Debug, Clone, Copy, Default)]
struct Tally {
    applicable: usize,
    rejections: usize,
    inconclusive: usize,
}

const CHUNK: usize = 25;

/// Thread pool honouring `SPANLAB_THREADS`.
pub fn thread_pool() -> rayon::ThreadPool {
    let threads = std::env::var("SPANLAB_THREADS")
        .ok()
        .and_then(|v| v.parse::<usize>().ok())
        .filter(|n| *n > 0)
        .unwrap_or(0);
    rayon::ThreadPoolBuilder::new()
        .num_threads(threads)
        .build()
        .expect("thread pool construction")
}

/// Runs every test of `tests` on `replications` panels of `cell`.
pub fn run_cell(
    cell: &Cell,
    tests: &[&dyn PanelTest],
    replications: usize,
    level: f64,
    master_seed: u64,
    time_budget_secs: Option<f64>,
    parallel: bool,
) -> Vec<CellResult> {
    let spec = &cell.spec;
    let (t, k, n) = (spec.t, spec.k, spec.n);
    let active: Vec<bool> = tests.iter().map(|x| x.applicable(t, k, n)).collect();
    let start = Instant::now();

    let one = |rep: usize| -> Vec<Option<Decision>> {
        let seed = panel_seed(master_seed, cell.dgp_index, k, n, t, rep);
        let panel = match simulate_panel(spec, seed) {
            Ok(p) => p,
            Err(_) => return vec![None; tests.len()],
        };
        let ts = test_seed(seed);
        tests
            .iter()
            .zip(&active)
            .map(|(test, &on)| {
                if !on {
                    return None;
                }
                test.evaluate(&panel, ts).ok().map(|o| o.decision(level))
            })
            .collect()
    };

    let mut tallies = vec![Tally::default(); tests.len()];
    let mut done = 0;
    if active.iter().any(|a| *a) {
        while done < replications {
            if let Some(budget) = time_budget_secs {
                if done > 0 && start.elapsed().as_secs_f64() > budget {
                    break;
                }
            }
            let end = (done + CHUNK).min(replications);
            let rows: Vec<Vec<Option<Decision>>> = if parallel {
                (done..end).into_par_iter().map(one).collect()
            } else {
                (done..end).map(one).collect()
            };
            for row in rows {
                for (tally, d) in tallies.iter_mut().zip(row) {
                    if let Some(d) = d {
                        tally.applicable += 1;
                        match d {
                            Decision::Reject => tally.rejections += 1,
                            Decision::Inconclusive => tally.inconclusive += 1,
                            _ => {}
                        }
                    }
                }
            }
            done = end;
        }
    }
    let wall = start.elapsed().as_secs_f64();

    tests
        .iter()
        .zip(tallies)
        .map(|(test, tally)| {
            let applicable = tally.applicable > 0;
            let denom = tally.applicable as f64;
            CellResult {
                test: test.name(),
                dgp: spec.name.clone(),
                k,
                n,
                t,
                a: spec.alternative_a,
                level,
                replications: done,
                rejection_rate: applicable.then(|| tally.rejections as f64 / denom),
                inconclusive_rate: (applicable && test.reports_interval())
                    .then(|| tally.inconclusive as f64 / denom),
                applicable,
                seed: master_seed,
                wall_time: wall,
            }
        })
        .collect()
}

fn cells(grid: &ExperimentGrid, alternatives: &[f64]) -> Result<Vec<Cell>> {
    let mut out = Vec::new();
    for name in &grid.dgps {
        let base = catalog_entry(name)?;
        let dgp_index: usize = base.name[3..].parse().expect("catalog names are DGP<n>");
        for &k in &grid.k_values {
            for &n in &grid.n_values {
                for &a in alternatives {
                    let mut spec = base.clone().with_dims(k, n, grid.t).with_alternative(a);
                    spec.burn_in = grid.burn_in;
                    out.push(Cell { dgp_index, spec });
                }
            }
        }
    }
    Ok(out)
}

fn run_grid(grid: &ExperimentGrid, alternatives: &[f64], parallel: bool) -> Result<Vec<CellResult>> {
    grid.validate()?;
    let configured = grid.configured_tests();
    let tests: Vec<&dyn PanelTest> = configured.iter().map(|c| c as &dyn PanelTest).collect();
    let cells = cells(grid, alternatives)?;
    let run = || {
        cells
            .iter()
            .flat_map(|c| {
                run_cell(c, &tests, grid.replications, grid.level, grid.seed, grid.time_budget_secs, parallel)
            })
            .collect()
    };
    Ok(if parallel { thread_pool().install(run) } else { run() })
}

/// Null rejection frequencies for every cell of the grid (`power_grid` is
/// ignored).
pub fn run_size_study(grid: &ExperimentGrid) -> Result<Vec<CellResult>> {
    run_grid(grid, &[0.0], true)
}

/// Serial variant of [`run_size_study`], bit-identical by construction.
pub fn run_size_study_serial(grid: &ExperimentGrid) -> Result<Vec<CellResult>> {
    run_grid(grid, &[0.0], false)
}

/// One result per (cell, a) of `power_grid`.
pub fn run_power_study(grid: &ExperimentGrid) -> Result<Vec<CellResult>> {
    if grid.power_grid.is_empty() {
        return Err(Error::InvalidInput("power_grid: must be non-empty for a power study".into()));
    }
    run_grid(grid, &grid.power_grid.clone(), true)
}

/// Size study for an empty power grid, power study otherwise.
pub fn run_study(grid: &ExperimentGrid) -> Result<Vec<CellResult>> {
    if grid.power_grid.is_empty() {
        run_size_study(grid)
    } else {
        run_power_study(grid)
    }
}

/// Default alternative grid `a in {-0.4, -0.3, ..., 0.4}`.
pub fn default_power_grid() -> Vec<f64> {
    (-4..=4).map(|i| i as f64 / 10.0).collect()
}

/// Grid behind the `table2-desk` preset: every joint-null size cell with
/// `K, N <= 50`.
pub fn table2_desk_grid() -> ExperimentGrid {
    let dgps: Vec<String> = (1..=12).map(|i| format!("DGP{i}")).collect();
    let dgp_refs: Vec<&str> = dgps.iter().map(String::as_str).collect();
    ExperimentGrid::new(
        &dgp_refs,
        &[2, 10, 50],
        &[2, 10, 50],
        &[
            TestSpec::Hk,
            TestSpec::Gl { hypothesis: Hypothesis::Joint },
            TestSpec::Bcs { depth: 0, hypothesis: Hypothesis::Joint },
            TestSpec::Bcs { depth: 2, hypothesis: Hypothesis::Joint },
        ],
    )
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn test_names_round_trip() {
        for s in ["BCS2-joint", "BCS0-alpha", "BCS3-delta", "HK", "GL-joint", "GL-alpha", "PY", "F2"] {
            let t: TestSpec = s.parse().unwrap();
            assert_eq!(t.to_string(), s);
        }
        assert_eq!("gl".parse::<TestSpec>().unwrap(), TestSpec::Gl { hypothesis: Hypothesis::Joint });
        assert!("GL-delta".parse::<TestSpec>().is_err());
        assert!("XYZ".parse::<TestSpec>().is_err());
    }

    #[test]
    fn seeds_are_distinct() {
        let a = panel_seed(1, 1, 2, 2, 250, 0);
        assert_ne!(a, panel_seed(1, 1, 2, 2, 250, 1));
        assert_ne!(a, panel_seed(1, 2, 2, 2, 250, 0));
        assert_ne!(a, panel_seed(2, 1, 2, 2, 250, 0));
        assert_ne!(a, test_seed(a));
    }

    #[test]
    fn grid_validation_names_keys() {
        let mut g = ExperimentGrid::new(&["DGP1"], &[2], &[2], &[TestSpec::Hk]);
        assert!(g.validate().is_ok());
        g.zeta = 1.5;
        let msg = g.validate().unwrap_err().to_string();
        assert!(msg.contains("zeta"), "{msg}");
        g.zeta = 0.5;
        g.dgps.push("DGP99".into());
        assert!(g.validate().unwrap_err().to_string().contains("dgps[1]"));
    }

    #[test]
    fn applicability_rules() {
        assert!(!TestSpec::Hk.applicable(250, 2, 400));
        assert!(TestSpec::Hk.applicable(250, 2, 247));
        assert!(TestSpec::Py.applicable(250, 2, 400));
        assert!(TestSpec::Gl { hypothesis: Hypothesis::Joint }.applicable(250, 100, 400));
    }
}
