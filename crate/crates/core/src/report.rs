//! Report rows, CSV/JSON emission, manifests and the table pivot.

use std::collections::BTreeSet;
use std::fs::File;
use std::io::{self, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::Error;

pub const REPORT_COLUMNS: [&str; 12] = [
    "test",
    "dgp",
    "K",
    "N",
    "T",
    "a",
    "level",
    "replications",
    "rejection_rate",
    "inconclusive_rate",
    "applicable",
    "seed",
];

/// Aggregated outcome of one test in one (DGP, K, N, a) cell.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CellResult {
    pub test: String,
    pub dgp: String,
    #[serde(rename = "K")]
    pub k: usize,
    #[serde(rename = "N")]
    pub n: usize,
    #[serde(rename = "T")]
    pub t: usize,
    pub a: f64,
    pub level: f64,
    pub replications: usize,
    /// Rejections over applicable replications; `None` when never applicable.
    pub rejection_rate: Option<f64>,
    /// Share of inconclusive outcomes (interval tests only).
    pub inconclusive_rate: Option<f64>,
    pub applicable: bool,
    pub seed: u64,
    /// Seconds spent on the cell. Kept out of the report so reports are
    /// reproducible; recorded in the manifest instead.
    #[serde(skip)]
    pub wall_time: f64,
}

impl PartialEq for CellResult {
    fn eq(&self, o: &Self) -> bool {
        self.test == o.test
            && self.dgp == o.dgp
            && (self.k, self.n, self.t) == (o.k, o.n, o.t)
            && self.a == o.a
            && self.level == o.level
            && self.replications == o.replications
            && self.rejection_rate == o.rejection_rate
            && self.inconclusive_rate == o.inconclusive_rate
            && self.applicable == o.applicable
            && self.seed == o.seed
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ReportFormat {
    Csv,
    Json,
}

impl FromStr for ReportFormat {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self, Error> {
        match s.to_ascii_lowercase().as_str() {
            "csv" => Ok(ReportFormat::Csv),
            "json" => Ok(ReportFormat::Json),
            other => Err(Error::InvalidInput(format!("unknown format '{other}'"))),
        }
    }
}

impl ReportFormat {
    pub fn extension(self) -> &'static str {
        match self {
            ReportFormat::Csv => "csv",
            ReportFormat::Json => "json",
        }
    }
}

pub fn write_report<W: Write>(results: &[CellResult], format: ReportFormat, out: W) -> io::Result<()> {
    match format {
        ReportFormat::Csv => {
            let mut w = csv::Writer::from_writer(out);
            if results.is_empty() {
                w.write_record(REPORT_COLUMNS)?;
            }
            for r in results {
                w.serialize(r)?;
            }
            w.flush()
        }
        ReportFormat::Json => {
            let mut out = out;
            serde_json::to_writer_pretty(&mut out, results)?;
            out.write_all(b"\n")
        }
    }
}

pub fn parse_report<R: io::Read>(input: R, format: ReportFormat) -> io::Result<Vec<CellResult>> {
    match format {
        ReportFormat::Csv => {
            let mut r = csv::Reader::from_reader(input);
            r.deserialize().map(|row| row.map_err(io::Error::from)).collect()
        }
        ReportFormat::Json => Ok(serde_json::from_reader(input)?),
    }
}

pub fn read_report(path: &Path, format: ReportFormat) -> io::Result<Vec<CellResult>> {
    parse_report(File::open(path)?, format)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CellTiming {
    pub test: String,
    pub dgp: String,
    #[serde(rename = "K")]
    pub k: usize,
    #[serde(rename = "N")]
    pub n: usize,
    pub a: f64,
    pub wall_time: f64,
}

/// Companion record of how a report was produced.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub version: String,
    pub git_hash: String,
    pub created: String,
    pub master_seed: u64,
    pub seed_scheme: String,
    pub grid: serde_json::Value,
    pub cells: Vec<CellTiming>,
}

impl Manifest {
    pub fn new(grid: serde_json::Value, master_seed: u64, results: &[CellResult]) -> Self {
        Manifest {
            version: crate::VERSION.to_string(),
            git_hash: crate::GIT_HASH.to_string(),
            created: chrono::Utc::now().to_rfc3339(),
            master_seed,
            seed_scheme: "panel = mix(master, dgp, K, N, T, rep); tests = mix(panel, stream)".into(),
            grid,
            cells: results
                .iter()
                .map(|r| CellTiming {
                    test: r.test.clone(),
                    dgp: r.dgp.clone(),
                    k: r.k,
                    n: r.n,
                    a: r.a,
                    wall_time: r.wall_time,
                })
                .collect(),
        }
    }
}

pub fn manifest_path(report: &Path) -> PathBuf {
    let mut name = report.file_stem().map(|s| s.to_os_string()).unwrap_or_default();
    name.push(".manifest.json");
    report.with_file_name(name)
}

/// Writes the report and its manifest next to it; returns the manifest path.
pub fn emit_report(
    results: &[CellResult],
    format: ReportFormat,
    path: &Path,
    manifest: &Manifest,
) -> io::Result<PathBuf> {
    write_report(results, format, BufWriter::new(File::create(path)?))?;
    let mpath = manifest_path(path);
    let mut f = BufWriter::new(File::create(&mpath)?);
    serde_json::to_writer_pretty(&mut f, manifest)?;
    f.write_all(b"\n")?;
    f.flush()?;
    Ok(mpath)
}

/// Rows `(dgp, K)`, column groups `(test, N)`, cells in percent with `-`
/// for inapplicable cells.
#[derive(Debug, Clone, PartialEq)]
pub struct PivotTable {
    pub header: Vec<String>,
    pub rows: Vec<Vec<String>>,
}

fn push_unique<T: PartialEq + Clone>(v: &mut Vec<T>, x: &T) {
    if !v.contains(x) {
        v.push(x.clone());
    }
}

pub fn pivot_table(results: &[CellResult], a: f64) -> PivotTable {
    let sel: Vec<&CellResult> = results.iter().filter(|r| r.a == a).collect();
    let mut tests = Vec::new();
    let mut dgps = Vec::new();
    for r in &sel {
        push_unique(&mut tests, &r.test);
        push_unique(&mut dgps, &r.dgp);
    }
    let ks: BTreeSet<usize> = sel.iter().map(|r| r.k).collect();
    let ns: BTreeSet<usize> = sel.iter().map(|r| r.n).collect();

    let mut header = vec!["dgp".to_string(), "K".to_string()];
    for t in &tests {
        for n in &ns {
            header.push(format!("{t}@N={n}"));
        }
    }
    let mut rows = Vec::new();
    for d in &dgps {
        for &k in &ks {
            if !sel.iter().any(|r| &r.dgp == d && r.k == k) {
                continue;
            }
            let mut row = vec![d.clone(), k.to_string()];
            for t in &tests {
                for &n in &ns {
                    let cell = sel.iter().find(|r| &r.dgp == d && r.k == k && r.n == n && &r.test == t);
                    row.push(match cell {
                        Some(r) if r.applicable => {
                            format!("{:.1}", 100.0 * r.rejection_rate.unwrap_or(f64::NAN))
                        }
                        Some(_) => "-".into(),
                        None => String::new(),
                    });
                }
            }
            rows.push(row);
        }
    }
    PivotTable { header, rows }
}

impl PivotTable {
    pub fn render(&self) -> String {
        let cols = self.header.len();
        let widths: Vec<usize> = (0..cols)
            .map(|c| {
                self.rows
                    .iter()
                    .map(|r| r[c].len())
                    .chain(std::iter::once(self.header[c].len()))
                    .max()
                    .unwrap_or(0)
            })
            .collect();
        let line = |cells: &[String]| {
            cells
                .iter()
                .zip(&widths)
                .map(|(c, w)| format!("{c:>w$}"))
                .collect::<Vec<_>>()
                .join("  ")
        };
        let mut out = line(&self.header);
        out.push('\n');
        for r in &self.rows {
            out.push_str(&line(r));
            out.push('\n');
        }
        out
    }
}
