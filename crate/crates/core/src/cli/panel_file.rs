//! CSV panels: header row, one ISO-8601 date column, decimal returns.

use std::path::{Path, PathBuf};

use chrono::{Datelike, NaiveDate};
use nalgebra::DMatrix;

use super::CliError;
use crate::panel::ReturnPanel;

#[derive(Debug, Clone, PartialEq)]
pub struct PanelFile {
    pub path: PathBuf,
    pub date_column: String,
    /// Benchmark columns in order. Empty means "the first `k` non-date
    /// columns" when `k` is set.
    pub benchmark_columns: Vec<String>,
    /// Test columns in order. Empty means every remaining non-date column.
    pub test_columns: Vec<String>,
    pub k: Option<usize>,
}

impl PanelFile {
    pub fn new(path: impl AsRef<Path>) -> Self {
        PanelFile {
            path: path.as_ref().to_path_buf(),
            date_column: "date".into(),
            benchmark_columns: Vec::new(),
            test_columns: Vec::new(),
            k: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LoadedPanel {
    pub dates: Vec<NaiveDate>,
    pub panel: ReturnPanel,
}

impl LoadedPanel {
    /// Consecutive calendar-year slices as `(year, first row, end row)`.
    pub fn years(&self) -> Vec<(i32, usize, usize)> {
        let mut out: Vec<(i32, usize, usize)> = Vec::new();
        for (i, d) in self.dates.iter().enumerate() {
            match out.last_mut() {
                Some(last) if last.0 == d.year() => last.2 = i + 1,
                _ => out.push((d.year(), i, i + 1)),
            }
        }
        out
    }
}

fn resolve(headers: &[String], name: &str) -> Result<usize, CliError> {
    headers
        .iter()
        .position(|h| h == name)
        .ok_or_else(|| CliError::data(format!("column '{name}' not found in header")))
}

pub fn load_panel(file: &PanelFile) -> Result<LoadedPanel, CliError> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .trim(csv::Trim::All)
        .from_path(&file.path)
        .map_err(|e| CliError::data(format!("{}: {e}", file.path.display())))?;
    let headers: Vec<String> = reader
        .headers()
        .map_err(|e| CliError::data(format!("{}: {e}", file.path.display())))?
        .iter()
        .map(str::to_string)
        .collect();
    let date_idx = resolve(&headers, &file.date_column)?;
    let others: Vec<String> = headers.iter().filter(|h| **h != file.date_column).cloned().collect();

    let bench: Vec<String> = if !file.benchmark_columns.is_empty() {
        file.benchmark_columns.clone()
    } else if let Some(k) = file.k {
        if k == 0 || k >= others.len() {
            return Err(CliError::usage(format!(
                "K = {k} leaves no test assets among {} return columns",
                others.len()
            )));
        }
        others[..k].to_vec()
    } else {
        return Err(CliError::usage("specify --benchmarks or --k".to_string()));
    };
    let tests: Vec<String> = if file.test_columns.is_empty() {
        others.iter().filter(|h| !bench.contains(h)).cloned().collect()
    } else {
        file.test_columns.clone()
    };
    if tests.is_empty() {
        return Err(CliError::usage("no test-asset columns selected".to_string()));
    }
    let labels: Vec<String> = bench.iter().chain(&tests).cloned().collect();
    for (i, l) in labels.iter().enumerate() {
        if labels[..i].contains(l) {
            return Err(CliError::usage(format!("column '{l}' selected twice")));
        }
    }
    let cols: Vec<usize> = labels.iter().map(|l| resolve(&headers, l)).collect::<Result<_, _>>()?;

    let mut dates = Vec::new();
    let mut values = Vec::new();
    for (row_no, record) in reader.records().enumerate() {
        // Line 1 is the header.
        let line = row_no + 2;
        let record = record.map_err(|e| CliError::data(format!("line {line}: {e}")))?;
        let raw_date = record.get(date_idx).unwrap_or("");
        let date = NaiveDate::parse_from_str(raw_date, "%Y-%m-%d").map_err(|_| {
            CliError::data(format!(
                "parse error at line {line}, column '{}': '{raw_date}' is not an ISO-8601 date",
                file.date_column
            ))
        })?;
        if let Some(prev) = dates.last() {
            if date <= *prev {
                return Err(CliError::data(format!(
                    "line {line}: date {date} is not after the previous date {prev}"
                )));
            }
        }
        dates.push(date);
        for (&c, label) in cols.iter().zip(&labels) {
            let raw = record.get(c).unwrap_or("");
            if raw.is_empty() || raw.eq_ignore_ascii_case("na") || raw.eq_ignore_ascii_case("nan") {
                return Err(CliError::data(format!("missing data at line {line}, column '{label}'")));
            }
            let v: f64 = raw.parse().map_err(|_| {
                CliError::data(format!("parse error at line {line}, column '{label}': '{raw}' is not a number"))
            })?;
            if !v.is_finite() {
                return Err(CliError::data(format!("missing data at line {line}, column '{label}'")));
            }
            values.push(v);
        }
    }
    let t = dates.len();
    let k = bench.len();
    if t < k + 2 {
        return Err(CliError::data(format!("panel has {t} rows; need at least K + 2 = {}", k + 2)));
    }
    let m = DMatrix::from_row_slice(t, labels.len(), &values);
    let panel = ReturnPanel::new(m, k, Some(labels)).map_err(|e| CliError::data(e.to_string()))?;
    Ok(LoadedPanel { dates, panel })
}
