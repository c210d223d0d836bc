//! `spanlab` command-line front end.
//!
//! Exit codes: 0 success, 2 usage or configuration error, 3 data error,
//! 4 numerical failure (no requested test could be computed).

pub mod commands;
pub mod panel_file;
pub mod selftest;

use std::fmt;
use std::io::{self, Write};
use std::path::PathBuf;

use chrono::NaiveDate;
use clap::{Args, Parser, Subcommand};

pub use commands::{
    business_days, cmd_generate, cmd_simulate, cmd_test, cmd_test_loaded, decision_symbol, load_grid, preset,
    write_panel_csv, GenerateSpec, OutcomeRow, RunConfig, SimulateSummary, TestReport,
};
pub use panel_file::{load_panel, LoadedPanel, PanelFile};
pub use selftest::{run_selftest, Kernels, SelftestReport};

use crate::report::ReportFormat;
use crate::spanning::Hypothesis;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ErrorKind {
    Usage,
    Data,
    Numerical,
    Io,
}

#[derive(Debug, Clone, PartialEq)]
pub struct CliError {
    pub kind: ErrorKind,
    pub message: String,
}

impl CliError {
    pub fn usage(message: String) -> Self {
        CliError { kind: ErrorKind::Usage, message }
    }
    pub fn data(message: String) -> Self {
        CliError { kind: ErrorKind::Data, message }
    }
    pub fn numerical(message: String) -> Self {
        CliError { kind: ErrorKind::Numerical, message }
    }
    pub fn io(message: String) -> Self {
        CliError { kind: ErrorKind::Io, message }
    }

    pub fn from_core(e: crate::Error) -> Self {
        if e.is_numerical() {
            CliError::numerical(e.to_string())
        } else {
            CliError::usage(e.to_string())
        }
    }

    pub fn exit_code(&self) -> i32 {
        match self.kind {
            ErrorKind::Usage => 2,
            ErrorKind::Data | ErrorKind::Io => 3,
            ErrorKind::Numerical => 4,
        }
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.message)
    }
}

impl std::error::Error for CliError {}

/// Accepts decimals and simple fractions such as `1/3`.
pub fn parse_fraction(s: &str) -> Result<f64, String> {
    let bad = || format!("'{s}' is not a number or fraction");
    match s.split_once('/') {
        Some((a, b)) => {
            let a: f64 = a.trim().parse().map_err(|_| bad())?;
            let b: f64 = b.trim().parse().map_err(|_| bad())?;
            if b == 0.0 {
                return Err(bad());
            }
            Ok(a / b)
        }
        None => s.trim().parse().map_err(|_| bad()),
    }
}

/// Comma-separated hypotheses, or `all`.
#[derive(Debug, Clone, PartialEq)]
pub struct HypothesisSet(pub Vec<Hypothesis>);

fn parse_hypotheses(s: &str) -> Result<HypothesisSet, String> {
    if s.eq_ignore_ascii_case("all") {
        return Ok(HypothesisSet(Hypothesis::ALL.to_vec()));
    }
    let mut out = Vec::new();
    for part in s.split(',') {
        let h: Hypothesis = part.trim().parse().map_err(|e: crate::Error| e.to_string())?;
        if !out.contains(&h) {
            out.push(h);
        }
    }
    Ok(HypothesisSet(out))
}

fn split_list(s: &Option<String>) -> Vec<String> {
    s.as_deref()
        .map(|v| v.split(',').map(|c| c.trim().to_string()).filter(|c| !c.is_empty()).collect())
        .unwrap_or_default()
}

#[derive(Debug, Parser)]
#[command(name = "spanlab", about = "Mean-variance spanning tests for return panels", disable_version_flag = true)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Run spanning tests on a CSV return panel.
    Test(TestArgs),
    /// Run a Monte Carlo size or power study.
    Simulate(SimulateArgs),
    /// Write a simulated panel as CSV.
    Generate(GenerateArgs),
    /// Print version and build hash.
    Version,
    /// Run the built-in identity checks.
    Selftest,
}

#[derive(Debug, Args)]
pub struct TestArgs {
    /// CSV file with a header row and an ISO-8601 date column.
    pub panel: PathBuf,
    #[arg(long, default_value = "date")]
    pub date_column: String,
    /// Comma-separated benchmark columns.
    #[arg(long)]
    pub benchmarks: Option<String>,
    /// Comma-separated test-asset columns (default: all remaining).
    #[arg(long)]
    pub tests: Option<String>,
    /// Use the first K return columns as benchmarks.
    #[arg(long = "K", visible_alias = "k")]
    pub k: Option<usize>,
    /// JSON run configuration; flags given explicitly override it.
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long, value_parser = parse_hypotheses)]
    pub hypothesis: Option<HypothesisSet>,
    #[arg(long, value_parser = parse_fraction)]
    pub zeta: Option<f64>,
    #[arg(long = "L", visible_alias = "depth")]
    pub depth: Option<usize>,
    #[arg(long)]
    pub level: Option<f64>,
    #[arg(long)]
    pub seed: Option<u64>,
    /// Also run the GL simulation test.
    #[arg(long)]
    pub gl: bool,
    #[arg(long = "gl-reps")]
    pub gl_reps: Option<usize>,
    /// Also run HK, GRS, F1, BJ, PY, KM and F2.
    #[arg(long)]
    pub classical: bool,
    /// Test each calendar year separately.
    #[arg(long)]
    pub yearly: bool,
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[arg(long, default_value = "json")]
    pub format: ReportFormat,
}

#[derive(Debug, Args)]
pub struct SimulateArgs {
    /// JSON experiment grid.
    #[arg(long, conflicts_with = "preset", required_unless_present = "preset")]
    pub config: Option<PathBuf>,
    /// Built-in grid (table2-desk).
    #[arg(long)]
    pub preset: Option<String>,
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long, default_value = "csv")]
    pub format: ReportFormat,
    #[arg(long)]
    pub replications: Option<usize>,
    #[arg(long)]
    pub seed: Option<u64>,
    /// Print the pivoted rejection-rate table.
    #[arg(long)]
    pub pivot: bool,
}

#[derive(Debug, Args)]
pub struct GenerateArgs {
    #[arg(long, default_value = "DGP1")]
    pub dgp: String,
    #[arg(long = "K", visible_alias = "k", default_value_t = 2)]
    pub k: usize,
    #[arg(long = "N", visible_alias = "n", default_value_t = 2)]
    pub n: usize,
    #[arg(long = "T", visible_alias = "t", default_value_t = 250)]
    pub t: usize,
    #[arg(long, default_value_t = 0.0, allow_hyphen_values = true)]
    pub a: f64,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long, default_value = "2020-01-01")]
    pub start: NaiveDate,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

fn run_config(args: &TestArgs) -> Result<RunConfig, CliError> {
    let mut cfg = match &args.config {
        Some(path) => {
            let text =
                std::fs::read_to_string(path).map_err(|e| CliError::usage(format!("{}: {e}", path.display())))?;
            serde_json::from_str(&text).map_err(|e| CliError::usage(format!("{}: {e}", path.display())))?
        }
        None => RunConfig::default(),
    };
    if let Some(h) = &args.hypothesis {
        cfg.hypotheses = h.0.clone();
    }
    if let Some(z) = args.zeta {
        cfg.zeta = z;
    }
    if let Some(l) = args.depth {
        cfg.depth = l;
    }
    if let Some(l) = args.level {
        cfg.level = l;
    }
    if let Some(s) = args.seed {
        cfg.seed = s;
    }
    if let Some(r) = args.gl_reps {
        cfg.gl_replications = r;
    }
    cfg.include_gl |= args.gl;
    cfg.include_classical |= args.classical;
    cfg.yearly_split |= args.yearly;
    cfg.validate()?;
    Ok(cfg)
}

fn write_rows_csv(report: &TestReport, path: &PathBuf) -> Result<(), CliError> {
    let io = |e: csv::Error| CliError::io(format!("{}: {e}", path.display()));
    let mut w = csv::Writer::from_path(path).map_err(io)?;
    w.write_record(["period", "start", "end", "T", "test", "hypothesis", "p_value", "p_low", "p_high", "decision"])
        .map_err(io)?;
    let f = |p: Option<f64>| p.map(|v| v.to_string()).unwrap_or_default();
    for r in &report.rows {
        w.write_record([
            r.period.clone(),
            r.start.clone(),
            r.end.clone(),
            r.periods.to_string(),
            r.test.clone(),
            r.hypothesis.as_str().to_string(),
            f(r.p_value),
            f(r.p_low),
            f(r.p_high),
            r.decision.label().to_string(),
        ])
        .map_err(io)?;
    }
    w.flush().map_err(|e| CliError::io(e.to_string()))
}

fn run_test(args: &TestArgs) -> Result<i32, CliError> {
    let cfg = run_config(args)?;
    let mut file = PanelFile::new(&args.panel);
    file.date_column = args.date_column.clone();
    file.benchmark_columns = split_list(&args.benchmarks);
    file.test_columns = split_list(&args.tests);
    file.k = args.k;
    let report = cmd_test(&file, &cfg)?;
    print!("{}", report.render_text());
    if let Some(out) = &args.out {
        match args.format {
            ReportFormat::Json => std::fs::write(out, report.to_json())
                .map_err(|e| CliError::io(format!("{}: {e}", out.display())))?,
            ReportFormat::Csv => write_rows_csv(&report, out)?,
        }
    }
    if report.all_not_applicable() {
        eprintln!("error: no requested test could be computed on this panel");
        return Ok(4);
    }
    Ok(0)
}

fn run_simulate(args: &SimulateArgs) -> Result<i32, CliError> {
    let mut grid = match (&args.config, &args.preset) {
        (Some(path), _) => load_grid(path)?,
        (None, Some(name)) => preset(name)?,
        (None, None) => return Err(CliError::usage("pass --config or --preset".into())),
    };
    if let Some(r) = args.replications {
        grid.replications = r;
    }
    if let Some(s) = args.seed {
        grid.seed = s;
    }
    let summary = cmd_simulate(&grid, &args.out, args.format)?;
    println!("wrote {} rows to {} (manifest {})", summary.rows, args.out.display(), summary.manifest.display());
    if args.pivot {
        print!("{}", summary.pivot);
    }
    Ok(0)
}

fn run_generate(args: &GenerateArgs) -> Result<i32, CliError> {
    let spec = GenerateSpec {
        dgp: args.dgp.clone(),
        k: args.k,
        n: args.n,
        t: args.t,
        a: args.a,
        seed: args.seed,
        start: args.start,
    };
    match &args.out {
        Some(path) => {
            let f = std::fs::File::create(path).map_err(|e| CliError::io(format!("{}: {e}", path.display())))?;
            cmd_generate(&spec, io::BufWriter::new(f))?;
        }
        None => cmd_generate(&spec, io::stdout().lock())?,
    }
    Ok(0)
}

pub fn version_string() -> String {
    format!("spanlab {} ({})", crate::VERSION, crate::GIT_HASH)
}

pub fn dispatch(cli: &Cli) -> Result<i32, CliError> {
    match &cli.command {
        Command::Test(a) => run_test(a),
        Command::Simulate(a) => run_simulate(a),
        Command::Generate(a) => run_generate(a),
        Command::Version => {
            println!("{}", version_string());
            Ok(0)
        }
        Command::Selftest => {
            let report = run_selftest(&Kernels::default());
            print!("{}", report.render());
            Ok(if report.passed() { 0 } else { 4 })
        }
    }
}

/// Parses `args` (including the program name) and runs the command.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 2 } else { 0 };
            let _ = e.print();
            return code;
        }
    };
    match dispatch(&cli) {
        Ok(code) => {
            let _ = io::stdout().flush();
            code
        }
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}

pub fn main() -> i32 {
    run(std::env::args_os())
}
