use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};

/// `T x (K + N)` matrix of simple returns: benchmark assets occupy the first
/// `K` columns, test assets the remaining `N`.
#[derive(Debug, Clone, PartialEq)]
pub struct ReturnPanel {
    returns: DMatrix<f64>,
    k: usize,
    labels: Vec<String>,
}

impl ReturnPanel {
    pub fn new(returns: DMatrix<f64>, k: usize, labels: Option<Vec<String>>) -> Result<Self> {
        let (t, cols) = returns.shape();
        if t < 2 {
            return Err(Error::InsufficientSample(format!("panel has {t} periods, need at least 2")));
        }
        if k == 0 {
            return Err(Error::InvalidInput("at least one benchmark asset is required".into()));
        }
        if cols <= k {
            return Err(Error::InvalidInput(format!(
                "panel has {cols} columns; need K={k} benchmarks plus at least one test asset"
            )));
        }
        if let Some((idx, _)) = returns.iter().enumerate().find(|(_, v)| !v.is_finite()) {
            return Err(Error::InvalidInput(format!(
                "non-finite return at period {}, column {}",
                idx % t,
                idx / t
            )));
        }
        let labels = match labels {
            Some(l) if l.len() != cols => {
                return Err(Error::LengthMismatch { expected: cols, found: l.len() })
            }
            Some(l) => l,
            None => (0..cols)
                .map(|c| if c < k { format!("B{}", c + 1) } else { format!("T{}", c - k + 1) })
                .collect(),
        };
        Ok(ReturnPanel { returns, k, labels })
    }

    /// Builds a panel from separate benchmark (`T x K`) and test (`T x N`) blocks.
    pub fn from_blocks(benchmarks: &DMatrix<f64>, tests: &DMatrix<f64>) -> Result<Self> {
        if benchmarks.nrows() != tests.nrows() {
            return Err(Error::LengthMismatch { expected: benchmarks.nrows(), found: tests.nrows() });
        }
        let returns = crate::linalg::hstack(&[benchmarks, tests]);
        ReturnPanel::new(returns, benchmarks.ncols(), None)
    }

    pub fn periods(&self) -> usize {
        self.returns.nrows()
    }

    pub fn benchmark_count(&self) -> usize {
        self.k
    }

    pub fn test_count(&self) -> usize {
        self.returns.ncols() - self.k
    }

    pub fn returns(&self) -> &DMatrix<f64> {
        &self.returns
    }

    pub fn labels(&self) -> &[String] {
        &self.labels
    }

    pub fn benchmarks(&self) -> DMatrix<f64> {
        self.returns.columns(0, self.k).into_owned()
    }

    pub fn tests(&self) -> DMatrix<f64> {
        self.returns.columns(self.k, self.test_count()).into_owned()
    }

    /// Benchmark column `j` (0-based).
    pub fn benchmark(&self, j: usize) -> DVector<f64> {
        self.returns.column(j).into_owned()
    }

    /// Test-asset column `j` (0-based).
    pub fn test_asset(&self, j: usize) -> Result<DVector<f64>> {
        if j >= self.test_count() {
            return Err(Error::IndexOutOfRange { index: j, len: self.test_count() });
        }
        Ok(self.returns.column(self.k + j).into_owned())
    }

    /// Contiguous period slice `[start, end)`.
    pub fn slice_periods(&self, start: usize, end: usize) -> Result<Self> {
        if start >= end || end > self.periods() {
            return Err(Error::InvalidInput(format!("bad period range {start}..{end}")));
        }
        let rows = self.returns.rows(start, end - start).into_owned();
        ReturnPanel::new(rows, self.k, Some(self.labels.clone()))
    }

    /// Same data with every return multiplied by `c`.
    pub fn scaled(&self, c: f64) -> Result<Self> {
        ReturnPanel::new(&self.returns * c, self.k, Some(self.labels.clone()))
    }
}
