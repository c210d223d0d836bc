use std::fmt::Write as _;
use std::io::Write;
use std::path::Path;

use chrono::{Datelike, Duration, NaiveDate, Weekday};
use serde::{Deserialize, Serialize};

use super::panel_file::{load_panel, LoadedPanel, PanelFile};
use super::CliError;
use crate::classical::{bj_test, f1_test, f2_test, grs_test, hk_test, km_test, py_test, gl_test, GlConfig};
use crate::dgp::{catalog_entry, simulate_panel};
use crate::error::Result as CoreResult;
use crate::montecarlo::{run_study, table2_desk_grid, ExperimentGrid};
use crate::panel::ReturnPanel;
use crate::report::{emit_report, pivot_table, Manifest, ReportFormat};
use crate::spanning::{BcsAnalysis, BcsConfig, Decision, Hypothesis, PValue, TestOutcome};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunConfig {
    pub hypotheses: Vec<Hypothesis>,
    pub zeta: f64,
    #[serde(rename = "L")]
    pub depth: usize,
    pub level: f64,
    pub seed: u64,
    pub gl_replications: usize,
    pub yearly_split: bool,
    pub include_gl: bool,
    pub include_classical: bool,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            hypotheses: Hypothesis::ALL.to_vec(),
            zeta: 1.0 / 3.0,
            depth: 2,
            level: 0.05,
            seed: 0,
            gl_replications: 500,
            yearly_split: false,
            include_gl: false,
            include_classical: false,
        }
    }
}

impl RunConfig {
    pub fn validate(&self) -> Result<(), CliError> {
        if !(self.zeta > 0.0 && self.zeta < 1.0) {
            return Err(CliError::usage(format!("zeta: {} is outside (0, 1)", self.zeta)));
        }
        if !(self.level > 0.0 && self.level < 1.0) {
            return Err(CliError::usage(format!("level: {} is outside (0, 1)", self.level)));
        }
        if self.include_gl && self.gl_replications < 99 {
            return Err(CliError::usage("gl_replications: must be at least 99".into()));
        }
        if self.hypotheses.is_empty() {
            return Err(CliError::usage("hypothesis: none selected".into()));
        }
        Ok(())
    }
}

/// One line of a `test` report.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OutcomeRow {
    pub period: String,
    pub start: String,
    pub end: String,
    pub periods: usize,
    pub test: String,
    pub hypothesis: Hypothesis,
    pub p_value: Option<f64>,
    pub p_low: Option<f64>,
    pub p_high: Option<f64>,
    pub decision: Decision,
    pub symbol: String,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub note: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TestReport {
    pub file: String,
    #[serde(rename = "K")]
    pub k: usize,
    #[serde(rename = "N")]
    pub n: usize,
    pub config: RunConfig,
    pub rows: Vec<OutcomeRow>,
}

/// Table-style symbol: reject, blank, inconclusive, not applicable.
pub fn decision_symbol(d: Decision) -> &'static str {
    match d {
        Decision::Reject => "✓",
        Decision::FailToReject => "",
        Decision::Inconclusive => "?",
        Decision::NotApplicable => "–",
    }
}

struct Slice<'a> {
    label: String,
    dates: &'a [NaiveDate],
    panel: CoreResult<ReturnPanel>,
}

fn run_tests(panel: &ReturnPanel, cfg: &RunConfig) -> Vec<(String, Hypothesis, CoreResult<TestOutcome>)> {
    let mut out = Vec::new();
    let bcs_cfg = BcsConfig { zeta: cfg.zeta, depth: cfg.depth, seed: cfg.seed };
    let analysis = BcsAnalysis::new(panel, &bcs_cfg);
    for &h in &cfg.hypotheses {
        let name = crate::spanning::bcs_name(cfg.depth, h);
        out.push((name, h, analysis.as_ref().map(|a| a.outcome(h)).map_err(Clone::clone)));
    }
    if cfg.include_gl {
        let gl_cfg = GlConfig { replications: cfg.gl_replications, seed: cfg.seed };
        for &h in &cfg.hypotheses {
            if h != Hypothesis::Delta {
                out.push(("GL".into(), h, gl_test(panel, h, &gl_cfg)));
            }
        }
    }
    if cfg.include_classical {
        for &h in &cfg.hypotheses {
            match h {
                Hypothesis::Joint => out.push(("HK".into(), h, hk_test(panel).map(|r| r.into_outcome()))),
                Hypothesis::Alpha => {
                    out.push(("GRS".into(), h, grs_test(panel).map(|r| r.into_outcome())));
                    out.push(("F1".into(), h, f1_test(panel).map(|r| r.into_outcome())));
                    out.push(("BJ".into(), h, bj_test(panel).map(|r| r.into_outcome())));
                    out.push(("PY".into(), h, py_test(panel, cfg.level).map(|r| r.into_outcome())));
                }
                Hypothesis::Delta => {
                    out.push(("KM".into(), h, km_test(panel).map(|r| r.into_outcome())));
                    out.push(("F2".into(), h, f2_test(panel).map(|r| r.into_outcome())));
                }
            }
        }
    }
    out
}

/// Runs the configured tests on the panel, or on each calendar year.
pub fn cmd_test_loaded(loaded: &LoadedPanel, file_label: &str, cfg: &RunConfig) -> Result<TestReport, CliError> {
    cfg.validate()?;
    let panel = &loaded.panel;
    let slices: Vec<Slice> = if cfg.yearly_split {
        loaded
            .years()
            .into_iter()
            .map(|(year, s, e)| Slice {
                label: year.to_string(),
                dates: &loaded.dates[s..e],
                panel: panel.slice_periods(s, e),
            })
            .collect()
    } else {
        vec![Slice { label: "all".into(), dates: &loaded.dates, panel: Ok(panel.clone()) }]
    };

    let mut rows = Vec::new();
    for slice in slices {
        let start = slice.dates.first().map(|d| d.to_string()).unwrap_or_default();
        let end = slice.dates.last().map(|d| d.to_string()).unwrap_or_default();
        let results = match &slice.panel {
            Ok(p) => run_tests(p, cfg),
            Err(e) => cfg
                .hypotheses
                .iter()
                .map(|&h| (crate::spanning::bcs_name(cfg.depth, h), h, Err(e.clone())))
                .collect(),
        };
        for (test, hypothesis, res) in results {
            let (p_value, p_low, p_high, decision, note) = match res {
                Ok(o) => {
                    let d = o.decision(cfg.level);
                    match o.p {
                        PValue::Point(p) => (Some(p), None, None, d, None),
                        PValue::Interval { low, high } => (None, Some(low), Some(high), d, None),
                    }
                }
                Err(e) => (None, None, None, Decision::NotApplicable, Some(e.to_string())),
            };
            rows.push(OutcomeRow {
                period: slice.label.clone(),
                start: start.clone(),
                end: end.clone(),
                periods: slice.dates.len(),
                test,
                hypothesis,
                p_value,
                p_low,
                p_high,
                decision,
                symbol: decision_symbol(decision).to_string(),
                note,
            });
        }
    }
    Ok(TestReport {
        file: file_label.to_string(),
        k: panel.benchmark_count(),
        n: panel.test_count(),
        config: cfg.clone(),
        rows,
    })
}

pub fn cmd_test(file: &PanelFile, cfg: &RunConfig) -> Result<TestReport, CliError> {
    let loaded = load_panel(file)?;
    let label = file.path.file_name().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default();
    cmd_test_loaded(&loaded, &label, cfg)
}

fn fmt_p(p: Option<f64>) -> String {
    p.map(|v| format!("{v:.4}")).unwrap_or_else(|| "-".into())
}

impl TestReport {
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes") + "\n"
    }

    /// Row listing followed by a period x test symbol grid.
    pub fn render_text(&self) -> String {
        let mut s = String::new();
        let _ = writeln!(
            s,
            "{}: K = {}, N = {}, level = {}, zeta = {:.4}, L = {}, seed = {}",
            self.file, self.k, self.n, self.config.level, self.config.zeta, self.config.depth, self.config.seed
        );
        let _ = writeln!(
            s,
            "{:<8} {:<23} {:>5}  {:<12} {:<6} {:>17}  decision",
            "period", "dates", "T", "test", "hyp", "p-value"
        );
        for r in &self.rows {
            let p = match (r.p_value, r.p_low, r.p_high) {
                (Some(p), _, _) => fmt_p(Some(p)),
                (None, Some(lo), Some(hi)) => format!("[{lo:.4}, {hi:.4}]"),
                _ => "-".into(),
            };
            let _ = writeln!(
                s,
                "{:<8} {:<23} {:>5}  {:<12} {:<6} {:>17}  {}",
                r.period,
                format!("{}..{}", r.start, r.end),
                r.periods,
                r.test,
                r.hypothesis.as_str(),
                p,
                r.decision
            );
        }
        let mut columns: Vec<(String, Hypothesis)> = Vec::new();
        let mut periods: Vec<String> = Vec::new();
        for r in &self.rows {
            let key = (r.test.clone(), r.hypothesis);
            if !columns.contains(&key) {
                columns.push(key);
            }
            if !periods.contains(&r.period) {
                periods.push(r.period.clone());
            }
        }
        let heads: Vec<String> = columns
            .iter()
            .map(|(t, h)| if t.starts_with("BCS") { t.clone() } else { format!("{t}-{h}") })
            .collect();
        let _ = writeln!(s);
        let _ = write!(s, "{:<8}", "");
        for h in &heads {
            let _ = write!(s, " {:^w$}", h, w = h.len().max(3));
        }
        let _ = writeln!(s);
        for p in &periods {
            let _ = write!(s, "{:<8}", p);
            for ((t, h), head) in columns.iter().zip(&heads) {
                let sym = self
                    .rows
                    .iter()
                    .find(|r| &r.period == p && &r.test == t && r.hypothesis == *h)
                    .map(|r| r.symbol.as_str())
                    .unwrap_or("");
                let _ = write!(s, " {:^w$}", sym, w = head.len().max(3));
            }
            let _ = writeln!(s);
        }
        s
    }

    pub fn all_not_applicable(&self) -> bool {
        !self.rows.is_empty() && self.rows.iter().all(|r| r.decision == Decision::NotApplicable)
    }
}

pub fn load_grid(path: &Path) -> Result<ExperimentGrid, CliError> {
    let text = std::fs::read_to_string(path).map_err(|e| CliError::usage(format!("{}: {e}", path.display())))?;
    let grid: ExperimentGrid =
        serde_json::from_str(&text).map_err(|e| CliError::usage(format!("{}: {e}", path.display())))?;
    grid.validate().map_err(|e| CliError::usage(e.to_string()))?;
    Ok(grid)
}

pub fn preset(name: &str) -> Result<ExperimentGrid, CliError> {
    match name {
        "table2-desk" => Ok(table2_desk_grid()),
        other => Err(CliError::usage(format!("unknown preset '{other}' (available: table2-desk)"))),
    }
}

pub struct SimulateSummary {
    pub rows: usize,
    pub manifest: std::path::PathBuf,
    pub pivot: String,
}

pub fn cmd_simulate(grid: &ExperimentGrid, out: &Path, format: ReportFormat) -> Result<SimulateSummary, CliError> {
    grid.validate().map_err(|e| CliError::usage(e.to_string()))?;
    let results = run_study(grid).map_err(CliError::from_core)?;
    let grid_json = serde_json::to_value(grid).expect("grid serializes");
    let manifest = Manifest::new(grid_json, grid.seed, &results);
    let mpath = emit_report(&results, format, out, &manifest).map_err(|e| CliError::io(format!("{}: {e}", out.display())))?;
    let mut pivot = String::new();
    let mut alts: Vec<f64> = Vec::new();
    for r in &results {
        if !alts.contains(&r.a) {
            alts.push(r.a);
        }
    }
    for a in alts {
        let _ = writeln!(pivot, "a = {a}");
        pivot.push_str(&pivot_table(&results, a).render());
    }
    Ok(SimulateSummary { rows: results.len(), manifest: mpath, pivot })
}

#[derive(Debug, Clone, PartialEq)]
pub struct GenerateSpec {
    pub dgp: String,
    pub k: usize,
    pub n: usize,
    pub t: usize,
    pub a: f64,
    pub seed: u64,
    pub start: NaiveDate,
}

/// Weekdays from `start` onwards.
pub fn business_days(start: NaiveDate, count: usize) -> Vec<NaiveDate> {
    let mut out = Vec::with_capacity(count);
    let mut d = start;
    while out.len() < count {
        if !matches!(d.weekday(), Weekday::Sat | Weekday::Sun) {
            out.push(d);
        }
        d += Duration::days(1);
    }
    out
}

pub fn write_panel_csv<W: Write>(dates: &[NaiveDate], panel: &ReturnPanel, out: W) -> Result<(), CliError> {
    let mut w = csv::Writer::from_writer(out);
    let io = |e: csv::Error| CliError::io(e.to_string());
    let mut header = vec!["date".to_string()];
    header.extend(panel.labels().iter().cloned());
    w.write_record(&header).map_err(io)?;
    let r = panel.returns();
    for (i, d) in dates.iter().enumerate() {
        let mut rec = vec![d.to_string()];
        rec.extend((0..r.ncols()).map(|j| format!("{}", r[(i, j)])));
        w.write_record(&rec).map_err(io)?;
    }
    w.flush().map_err(|e| CliError::io(e.to_string()))
}

pub fn cmd_generate<W: Write>(spec: &GenerateSpec, out: W) -> Result<(), CliError> {
    let base = catalog_entry(&spec.dgp).map_err(|e| CliError::usage(e.to_string()))?;
    let dgp = base.with_dims(spec.k, spec.n, spec.t).with_alternative(spec.a);
    let panel = simulate_panel(&dgp, spec.seed).map_err(|e| CliError::usage(e.to_string()))?;
    let dates = business_days(spec.start, spec.t);
    write_panel_csv(&dates, &panel, out)
}
