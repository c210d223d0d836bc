use std::io::Write;
use std::path::{Path, PathBuf};

use chrono::NaiveDate;
use spanlab::cli::{
    cmd_generate, cmd_simulate, cmd_test, load_grid, preset, run, run_selftest, version_string, CliError, ErrorKind,
    GenerateSpec, Kernels, PanelFile, RunConfig,
};
use spanlab::report::{read_report, ReportFormat};
use spanlab::{Decision, Hypothesis};

fn generate(dir: &Path, name: &str, dgp: &str, k: usize, n: usize, t: usize, seed: u64) -> PathBuf {
    let path = dir.join(name);
    let spec = GenerateSpec {
        dgp: dgp.into(),
        k,
        n,
        t,
        a: 0.0,
        seed,
        start: NaiveDate::from_ymd_opt(2020, 1, 1).unwrap(),
    };
    cmd_generate(&spec, std::fs::File::create(&path).unwrap()).unwrap();
    path
}

fn panel_file(path: &Path, k: usize) -> PanelFile {
    PanelFile { k: Some(k), ..PanelFile::new(path) }
}

fn code(args: &[&str]) -> i32 {
    run(std::iter::once("spanlab").chain(args.iter().copied()))
}

#[test]
fn missing_cell_names_line_and_column() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("gap.csv");
    let mut f = std::fs::File::create(&path).unwrap();
    writeln!(f, "date,m1,m2,x1").unwrap();
    for i in 0..20 {
        let x = if i == 7 { String::new() } else { format!("{}", 0.01 * i as f64) };
        writeln!(f, "2021-01-{:02},0.1,{},{x}", i + 1, 0.02 * i as f64).unwrap();
    }
    drop(f);
    let err = cmd_test(&panel_file(&path, 2), &RunConfig::default()).unwrap_err();
    assert_eq!(err.kind, ErrorKind::Data);
    assert!(err.message.contains("line 9") && err.message.contains("'x1'"), "{}", err.message);
    assert_eq!(code(&["test", path.to_str().unwrap(), "--K", "2"]), 3);
}

#[test]
fn unparsable_cell_is_a_data_error() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("bad.csv");
    std::fs::write(&path, "date,m1,x1\n2021-01-01,0.1,abc\n2021-01-02,0.2,0.3\n").unwrap();
    let err = cmd_test(&panel_file(&path, 1), &RunConfig::default()).unwrap_err();
    assert_eq!(err.exit_code(), 3);
    assert!(err.message.contains("'x1'"), "{}", err.message);
}

#[test]
fn yearly_split_gives_one_row_per_year() {
    let dir = tempfile::tempdir().unwrap();
    // 2020-01-01 plus 520 weekdays runs into 2021.
    let path = generate(dir.path(), "two.csv", "DGP1", 2, 2, 520, 4);
    let cfg = RunConfig { hypotheses: vec![Hypothesis::Joint], yearly_split: true, ..RunConfig::default() };
    let report = cmd_test(&panel_file(&path, 2), &cfg).unwrap();
    let periods: Vec<&str> = report.rows.iter().map(|r| r.period.as_str()).collect();
    assert_eq!(periods, vec!["2020", "2021"]);
    assert_eq!(report.rows.iter().map(|r| r.periods).sum::<usize>(), 520);
}

#[test]
fn null_panels_rarely_reject() {
    let dir = tempfile::tempdir().unwrap();
    let mut quiet = 0;
    for seed in 0..100 {
        let path = generate(dir.path(), "null.csv", "DGP1", 2, 2, 250, 1000 + seed);
        let cfg = RunConfig { seed, ..RunConfig::default() };
        let report = cmd_test(&panel_file(&path, 2), &cfg).unwrap();
        assert_eq!(report.rows.len(), 3);
        if report.rows.iter().all(|r| r.p_value.unwrap() > 0.05) {
            quiet += 1;
        }
    }
    assert!(quiet >= 80, "{quiet} of 100");
}

#[test]
fn json_output_is_byte_identical() {
    let dir = tempfile::tempdir().unwrap();
    let path = generate(dir.path(), "p.csv", "DGP4", 3, 4, 300, 9);
    let cfg = RunConfig { include_gl: true, include_classical: true, seed: 5, ..RunConfig::default() };
    let a = cmd_test(&panel_file(&path, 3), &cfg).unwrap().to_json();
    let b = cmd_test(&panel_file(&path, 3), &cfg).unwrap().to_json();
    assert_eq!(a, b);
    let out1 = dir.path().join("a.json");
    let out2 = dir.path().join("b.json");
    for out in [&out1, &out2] {
        let p = path.to_str().unwrap();
        assert_eq!(code(&["test", p, "--K", "3", "--gl", "--classical", "--seed", "5", "--out", out.to_str().unwrap()]), 0);
    }
    assert_eq!(std::fs::read(&out1).unwrap(), std::fs::read(&out2).unwrap());
}

#[test]
fn symbols_follow_decisions() {
    let dir = tempfile::tempdir().unwrap();
    let path = generate(dir.path(), "p.csv", "DGP1", 2, 3, 250, 2);
    let cfg = RunConfig { include_gl: true, include_classical: true, ..RunConfig::default() };
    let report = cmd_test(&panel_file(&path, 2), &cfg).unwrap();
    for r in &report.rows {
        let want = match r.decision {
            Decision::Reject => "✓",
            Decision::FailToReject => "",
            Decision::Inconclusive => "?",
            Decision::NotApplicable => "–",
        };
        assert_eq!(r.symbol, want, "{}", r.test);
    }
    assert!(report.rows.iter().any(|r| r.test == "GRS"));
    assert!(report.rows.iter().any(|r| r.test.starts_with("GL")));
}

#[test]
fn insufficient_year_is_not_applicable_not_fatal() {
    let dir = tempfile::tempdir().unwrap();
    // 2020-01-01 plus 265 weekdays leaves three days in 2021.
    let path = generate(dir.path(), "short.csv", "DGP1", 2, 2, 265, 1);
    let cfg = RunConfig { hypotheses: vec![Hypothesis::Joint], yearly_split: true, ..RunConfig::default() };
    let report = cmd_test(&panel_file(&path, 2), &cfg).unwrap();
    assert_eq!(report.rows.len(), 2);
    assert_eq!(report.rows[1].decision, Decision::NotApplicable);
    assert!(report.rows[1].note.is_some());
}

#[test]
fn zeta_out_of_range_is_a_usage_error() {
    let cfg = RunConfig { zeta: 1.5, ..RunConfig::default() };
    let err: CliError = cfg.validate().unwrap_err();
    assert_eq!(err.exit_code(), 2);
    assert!(err.message.contains("zeta"));
    let dir = tempfile::tempdir().unwrap();
    let path = generate(dir.path(), "p.csv", "DGP1", 2, 2, 100, 1);
    assert_eq!(code(&["test", path.to_str().unwrap(), "--K", "2", "--zeta", "1.5"]), 2);
    assert_eq!(code(&["test", path.to_str().unwrap(), "--K", "2", "--hypothesis", "gamma"]), 2);
    assert_eq!(code(&["frobnicate"]), 2);
}

#[test]
fn simulate_minimal_config() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("grid.json");
    std::fs::write(&cfg, r#"{"dgps": ["DGP1"], "K_values": [2], "N_values": [2], "replications": 50, "tests": ["HK"]}"#)
        .unwrap();
    let grid = load_grid(&cfg).unwrap();
    let out = dir.path().join("size.csv");
    let summary = cmd_simulate(&grid, &out, ReportFormat::Csv).unwrap();
    assert_eq!(summary.rows, 1);
    assert!(summary.manifest.exists());
    let rows = read_report(&out, ReportFormat::Csv).unwrap();
    assert_eq!(rows.len(), 1);
    assert_eq!((rows[0].test.as_str(), rows[0].replications), ("HK", 50));

    let out2 = dir.path().join("cli.json");
    let args = ["simulate", "--config", cfg.to_str().unwrap(), "--out", out2.to_str().unwrap(), "--format", "json"];
    assert_eq!(code(&args), 0);
    assert_eq!(read_report(&out2, ReportFormat::Json).unwrap(), rows);
}

#[test]
fn simulate_rejects_invalid_zeta() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("grid.json");
    std::fs::write(&cfg, r#"{"K_values": [2], "N_values": [2], "tests": ["HK"], "zeta": 1.5}"#).unwrap();
    let err = load_grid(&cfg).unwrap_err();
    assert_eq!(err.exit_code(), 2);
    assert!(err.message.contains("zeta"), "{}", err.message);
    let out = dir.path().join("x.csv");
    assert_eq!(code(&["simulate", "--config", cfg.to_str().unwrap(), "--out", out.to_str().unwrap()]), 2);
    std::fs::write(&cfg, r#"{"K_values": [2], "N_values": [2], "tests": ["HK"], "bogus": 1}"#).unwrap();
    assert!(load_grid(&cfg).unwrap_err().message.contains("bogus"));
}

#[test]
fn desk_preset_covers_small_cells() {
    let g = preset("table2-desk").unwrap();
    assert_eq!(g.dgps.len(), 12);
    assert_eq!((g.k_values.clone(), g.n_values.clone()), (vec![2, 10, 50], vec![2, 10, 50]));
    assert_eq!(g.tests.len(), 4);
    assert!(preset("table9").is_err());
}

#[test]
fn selftest_and_version() {
    assert!(run_selftest(&Kernels::default()).passed());
    assert_eq!(code(&["selftest"]), 0);
    let v = version_string();
    let mut parts = v.split_whitespace();
    assert_eq!(parts.next(), Some("spanlab"));
    let semver = parts.next().unwrap();
    assert_eq!(semver.split('.').filter(|p| p.parse::<u32>().is_ok()).count(), 3);
    let hash = parts.next().unwrap();
    assert!(hash.starts_with('(') && hash.ends_with(')'));
    assert_eq!(code(&["version"]), 0);
}

#[test]
fn all_inapplicable_exits_four() {
    let dir = tempfile::tempdir().unwrap();
    // Weekday run of 5 rows, split into a 2-row year and a 3-row year.
    let path = dir.path().join("tiny.csv");
    std::fs::write(
        &path,
        "date,m1,x1\n2020-12-30,0.1,0.2\n2020-12-31,0.3,0.1\n2021-01-04,0.2,0.4\n2021-01-05,0.5,0.1\n2021-01-06,0.1,0.3\n",
    )
    .unwrap();
    assert_eq!(code(&["test", path.to_str().unwrap(), "--K", "1", "--yearly", "--hypothesis", "joint"]), 4);
}

#[test]
fn binary_exit_codes() {
    let bin = env!("CARGO_BIN_EXE_spanlab");
    let status = |args: &[&str]| std::process::Command::new(bin).args(args).output().unwrap();
    let v = status(&["version"]);
    assert_eq!(v.status.code(), Some(0));
    assert_eq!(String::from_utf8(v.stdout).unwrap().trim(), version_string());
    assert_eq!(status(&["test", "/nonexistent/panel.csv", "--K", "1"]).status.code(), Some(3));
    assert_eq!(status(&["simulate"]).status.code(), Some(2));
}
