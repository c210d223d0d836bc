use nalgebra::DMatrix;
use pyo3::exceptions::{PyRuntimeError, PyValueError};
use pyo3::prelude::*;
use pyo3::types::PyDict;

use spanlab::classical::{self, GlConfig};
use spanlab::dgp;
use spanlab::regression;
use spanlab::spanning::{self, BcsConfig, Hypothesis, PValue, TestOutcome};
use spanlab::{Error, ReturnPanel};

fn to_py(e: Error) -> PyErr {
    if e.is_numerical() {
        PyRuntimeError::new_err(e.to_string())
    } else {
        PyValueError::new_err(e.to_string())
    }
}

/// Row-major nested lists to a `T x (K + N)` panel.
fn panel_from(rows: Vec<Vec<f64>>, k: usize) -> PyResult<ReturnPanel> {
    let cols = rows.first().map(|r| r.len()).unwrap_or(0);
    if let Some((i, r)) = rows.iter().enumerate().find(|(_, r)| r.len() != cols) {
        return Err(PyValueError::new_err(format!("row {i} has {} entries, expected {cols}", r.len())));
    }
    let flat: Vec<f64> = rows.iter().flatten().copied().collect();
    ReturnPanel::new(DMatrix::from_row_slice(rows.len(), cols, &flat), k, None).map_err(to_py)
}

fn hypothesis(s: &str) -> PyResult<Hypothesis> {
    s.parse().map_err(to_py)
}

fn outcome_dict<'py>(py: Python<'py>, o: &TestOutcome) -> PyResult<Bound<'py, PyDict>> {
    let d = PyDict::new(py);
    d.set_item("test", &o.test)?;
    d.set_item("hypothesis", o.hypothesis.as_str())?;
    match o.p {
        PValue::Point(p) => d.set_item("p_value", p)?,
        PValue::Interval { low, high } => {
            d.set_item("p_value", (low, high))?;
        }
    }
    d.set_item("per_asset_pvalues", o.per_asset_pvalues.clone())?;
    d.set_item("blocks", o.diagnostics.blocks)?;
    d.set_item("statistic", o.diagnostics.statistic)?;
    d.set_item("df", o.diagnostics.df)?;
    Ok(d)
}

/// BCS test on a `T x (K + N)` panel given as a list of rows.
#[pyfunction]
#[pyo3(signature = (returns, k, hypothesis = "joint", zeta = 1.0 / 3.0, depth = 2, seed = 0))]
fn bcs_test<'py>(
    py: Python<'py>,
    returns: Vec<Vec<f64>>,
    k: usize,
    hypothesis: &str,
    zeta: f64,
    depth: usize,
    seed: u64,
) -> PyResult<Bound<'py, PyDict>> {
    let panel = panel_from(returns, k)?;
    let h = self::hypothesis(hypothesis)?;
    let o = spanning::bcs_test(&panel, h, &BcsConfig { zeta, depth, seed }).map_err(to_py)?;
    outcome_dict(py, &o)
}

#[pyfunction]
#[pyo3(signature = (pvalues, weights = None))]
fn cauchy_combine(pvalues: Vec<f64>, weights: Option<Vec<f64>>) -> PyResult<f64> {
    match weights {
        Some(w) => spanning::cauchy_combine(&pvalues, &w),
        None => spanning::cauchy_combine_equal(&pvalues),
    }
    .map_err(to_py)
}

/// Block ranges and random weights for a sample of length `t`.
#[pyfunction]
#[pyo3(signature = (t, zeta = 1.0 / 3.0, depth = 2, seed = 0))]
fn make_batch_plan<'py>(py: Python<'py>, t: usize, zeta: f64, depth: usize, seed: u64) -> PyResult<Bound<'py, PyDict>> {
    let plan = spanning::make_batch_plan(t, zeta, depth, seed).map_err(to_py)?;
    let d = PyDict::new(py);
    let blocks: Vec<(usize, usize)> = plan.blocks.iter().map(|r| (r.start, r.end)).collect();
    d.set_item("blocks", blocks)?;
    d.set_item("weights", plan.weights())?;
    Ok(d)
}

/// Nodewise residuals of test asset `j` (0-based).
#[pyfunction]
fn nodewise_fit<'py>(py: Python<'py>, returns: Vec<Vec<f64>>, k: usize, j: usize) -> PyResult<Bound<'py, PyDict>> {
    let panel = panel_from(returns, k)?;
    let f = regression::nodewise_fit(&panel, j).map_err(to_py)?;
    let d = PyDict::new(py);
    d.set_item("alpha_hat", f.alpha_hat())?;
    d.set_item("delta_hat", f.delta_hat())?;
    d.set_item("v1", f.v1.as_slice().to_vec())?;
    d.set_item("v2", f.v2.as_slice().to_vec())?;
    d.set_item("v3", f.v3.as_slice().to_vec())?;
    d.set_item("g_sq", (f.g1_sq, f.g2_sq, f.g3_sq))?;
    d.set_item("exact_fit", f.exact_fit)?;
    Ok(d)
}

/// One of HK, GRS, F1, BJ, KM, F2 or PY.
#[pyfunction]
#[pyo3(signature = (name, returns, k, level = 0.05))]
fn classical_test<'py>(
    py: Python<'py>,
    name: &str,
    returns: Vec<Vec<f64>>,
    k: usize,
    level: f64,
) -> PyResult<Bound<'py, PyDict>> {
    let panel = panel_from(returns, k)?;
    let o = match name.to_ascii_uppercase().as_str() {
        "HK" => classical::hk_test(&panel).map(|r| r.into_outcome()),
        "GRS" => classical::grs_test(&panel).map(|r| r.into_outcome()),
        "F1" => classical::f1_test(&panel).map(|r| r.into_outcome()),
        "BJ" => classical::bj_test(&panel).map(|r| r.into_outcome()),
        "KM" => classical::km_test(&panel).map(|r| r.into_outcome()),
        "F2" => classical::f2_test(&panel).map(|r| r.into_outcome()),
        "PY" => classical::py_test(&panel, level).map(|r| r.into_outcome()),
        other => return Err(PyValueError::new_err(format!("unknown test '{other}'"))),
    }
    .map_err(to_py)?;
    outcome_dict(py, &o)
}

#[pyfunction]
#[pyo3(signature = (returns, k, hypothesis = "joint", replications = 500, seed = 0))]
fn gl_test<'py>(
    py: Python<'py>,
    returns: Vec<Vec<f64>>,
    k: usize,
    hypothesis: &str,
    replications: usize,
    seed: u64,
) -> PyResult<Bound<'py, PyDict>> {
    let panel = panel_from(returns, k)?;
    let h = self::hypothesis(hypothesis)?;
    let o = classical::gl_test(&panel, h, &GlConfig { replications, seed }).map_err(to_py)?;
    outcome_dict(py, &o)
}

/// Simulated panel from a catalog DGP as a list of rows.
#[pyfunction]
#[pyo3(signature = (dgp, k = 2, n = 2, t = 250, a = 0.0, seed = 0))]
fn simulate_panel(dgp: &str, k: usize, n: usize, t: usize, a: f64, seed: u64) -> PyResult<Vec<Vec<f64>>> {
    let spec = dgp::catalog_entry(dgp).map_err(to_py)?.with_dims(k, n, t).with_alternative(a);
    let panel = dgp::simulate_panel(&spec, seed).map_err(to_py)?;
    let r = panel.returns();
    Ok((0..r.nrows()).map(|i| r.row(i).iter().copied().collect()).collect())
}

#[pymodule]
fn spanlab_py(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add("__version__", spanlab::VERSION)?;
    m.add_function(wrap_pyfunction!(bcs_test, m)?)?;
    m.add_function(wrap_pyfunction!(cauchy_combine, m)?)?;
    m.add_function(wrap_pyfunction!(make_batch_plan, m)?)?;
    m.add_function(wrap_pyfunction!(nodewise_fit, m)?)?;
    m.add_function(wrap_pyfunction!(classical_test, m)?)?;
    m.add_function(wrap_pyfunction!(gl_test, m)?)?;
    m.add_function(wrap_pyfunction!(simulate_panel, m)?)?;
    Ok(())
}
