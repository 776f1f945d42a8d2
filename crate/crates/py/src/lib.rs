//! Python module `firmsim`: configs and presets as JSON, a stepping
//! `Simulation` class, whole runs and the metric functions.

use firmsim::harness::scenario::summarize;
use firmsim::harness::{preset_by_name, HarnessError};
use firmsim::metrics::{self, MetricsError};
use firmsim::model::{ConfigErrors, SimConfig};
use firmsim::{fields, DivisionType, PopulationGrid, RunOptions};
use pyo3::exceptions::{PyRuntimeError, PyValueError};
use pyo3::prelude::*;
use pyo3::types::PyDict;

fn value_err(e: impl std::fmt::Display) -> PyErr {
    PyValueError::new_err(e.to_string())
}

fn runtime_err(e: impl std::fmt::Display) -> PyErr {
    PyRuntimeError::new_err(e.to_string())
}

fn metrics_err(e: MetricsError) -> PyErr {
    value_err(e)
}

fn to_py<'py, T: serde::Serialize>(py: Python<'py>, value: &T) -> PyResult<Bound<'py, PyAny>> {
    let text = serde_json::to_string(value).map_err(runtime_err)?;
    py.import("json")?.call_method1("loads", (text,))
}

fn parse_config(config_json: &str) -> PyResult<SimConfig> {
    let cfg = SimConfig::from_json(config_json).map_err(value_err)?;
    firmsim::validate_config(cfg).map_err(|e: ConfigErrors| value_err(e))
}

fn harness_err(e: HarnessError) -> PyErr {
    if e.is_usage_error() {
        value_err(e)
    } else {
        runtime_err(e)
    }
}

fn grid_from_counts(width: u32, height: u32, counts: &[u32]) -> PyResult<PopulationGrid> {
    if counts.len() != width as usize * height as usize {
        return Err(value_err(format!("expected {} counts, got {}", width * height, counts.len())));
    }
    let mut g = PopulationGrid::zeros(width, height);
    for (i, &c) in counts.iter().enumerate() {
        g.add(g.cell(i), DivisionType::Old, c);
    }
    Ok(g)
}

/// Default configuration as a JSON string.
#[pyfunction]
fn default_config() -> String {
    SimConfig::default().to_json()
}

/// Configuration of a model preset ("1" to "7" or "text-lambda") as JSON.
#[pyfunction]
fn preset_config(name: &str) -> PyResult<String> {
    Ok(preset_by_name(name).map_err(harness_err)?.config.to_json())
}

/// Validation messages for a JSON config; empty when the config is valid.
#[pyfunction]
fn validate_config(config_json: &str) -> PyResult<Vec<String>> {
    let cfg = SimConfig::from_json(config_json).map_err(value_err)?;
    Ok(match firmsim::validate_config(cfg) {
        Ok(_) => Vec::new(),
        Err(errors) => errors.0.iter().map(|e| e.to_string()).collect(),
    })
}

/// Runs a config to completion and returns the run summary as a dict.
#[pyfunction]
fn run<'py>(py: Python<'py>, config_json: &str) -> PyResult<Bound<'py, PyAny>> {
    let cfg = parse_config(config_json)?;
    let result = py
        .detach(|| firmsim::run_with(cfg, RunOptions { snapshot_every: None, track_l_index: true }))
        .map_err(runtime_err)?;
    let summary = to_py(py, &summarize(&result))?;
    summary.set_item("reports", to_py(py, &result.reports)?)?;
    Ok(summary)
}

#[pyfunction]
fn softmax(utilities: Vec<f64>) -> PyResult<Vec<f64>> {
    fields::softmax(&utilities).map_err(value_err)
}

/// Cluster statistic K over row-major cell counts.
#[pyfunction]
#[pyo3(signature = (width, height, counts, d = 10.0))]
fn cluster_k(width: u32, height: u32, counts: Vec<u32>, d: f64) -> PyResult<f64> {
    metrics::cluster_k(&grid_from_counts(width, height, &counts)?, d).map_err(metrics_err)
}

#[pyfunction]
#[pyo3(signature = (k, d = 10.0))]
fn cluster_l(k: f64, d: f64) -> f64 {
    metrics::cluster_l(k, d)
}

/// OLS of log(count) on log(rank); returns a dict with slope, intercept and r_squared.
#[pyfunction]
fn power_law_fit<'py>(py: Python<'py>, counts: Vec<f64>) -> PyResult<Bound<'py, PyAny>> {
    to_py(py, &metrics::rank_size_fit_values(&counts).map_err(metrics_err)?)
}

/// A simulation that can be advanced step by step.
#[pyclass(module = "firmsim")]
struct Simulation {
    inner: firmsim::Simulation,
}

#[pymethods]
impl Simulation {
    #[new]
    #[pyo3(signature = (config_json = None))]
    fn new(config_json: Option<&str>) -> PyResult<Self> {
        let cfg = match config_json {
            Some(text) => parse_config(text)?,
            None => SimConfig::default(),
        };
        Ok(Self { inner: firmsim::Simulation::new(cfg).map_err(value_err)? })
    }

    /// Advances one step and returns its report as a dict.
    fn step<'py>(&mut self, py: Python<'py>) -> PyResult<Bound<'py, PyAny>> {
        let report = self.inner.step().map_err(runtime_err)?;
        to_py(py, &report)
    }

    /// Advances `n` steps and returns the list of reports.
    fn advance<'py>(&mut self, py: Python<'py>, n: u32) -> PyResult<Bound<'py, PyAny>> {
        let inner = &mut self.inner;
        let reports = py.detach(|| (0..n).map(|_| inner.step()).collect::<Result<Vec<_>, _>>()).map_err(runtime_err)?;
        to_py(py, &reports)
    }

    #[getter]
    fn step_index(&self) -> u32 {
        self.inner.state().step_index()
    }

    #[getter]
    fn n_divisions(&self) -> usize {
        self.inner.state().n_divisions()
    }

    #[getter]
    fn config(&self) -> String {
        self.inner.state().config().to_json()
    }

    /// Per-cell counts as a dict with width, height and row-major old/new/total lists.
    fn census<'py>(&self, py: Python<'py>) -> PyResult<Bound<'py, PyDict>> {
        let g = self.inner.state().population();
        let d = PyDict::new(py);
        d.set_item("width", g.width)?;
        d.set_item("height", g.height)?;
        d.set_item("old", g.count_old.clone())?;
        d.set_item("new", g.count_new.clone())?;
        d.set_item("total", g.count_total.clone())?;
        Ok(d)
    }

    /// `(K, L)` of the current census at distance `d` (defaults to the configured one).
    #[pyo3(signature = (d = None))]
    fn cluster_index(&self, d: Option<f64>) -> PyResult<(f64, f64)> {
        let state = self.inner.state();
        let d = d.unwrap_or(state.config().metric_distance);
        let idx = metrics::cluster_index(state.population(), d).map_err(metrics_err)?;
        Ok((idx.k_value, idx.l_value))
    }

    /// Occupied cells as `(x, y, count)`, largest first.
    fn rank_size(&self) -> Vec<(u32, u32, u32)> {
        metrics::rank_size(self.inner.state().population()).entries.iter().map(|(c, n)| (c.x, c.y, *n)).collect()
    }
}

#[pymodule]
#[pyo3(name = "firmsim")]
fn firmsim_py(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<Simulation>()?;
    m.add_function(wrap_pyfunction!(default_config, m)?)?;
    m.add_function(wrap_pyfunction!(preset_config, m)?)?;
    m.add_function(wrap_pyfunction!(validate_config, m)?)?;
    m.add_function(wrap_pyfunction!(run, m)?)?;
    m.add_function(wrap_pyfunction!(softmax, m)?)?;
    m.add_function(wrap_pyfunction!(cluster_k, m)?)?;
    m.add_function(wrap_pyfunction!(cluster_l, m)?)?;
    m.add_function(wrap_pyfunction!(power_law_fit, m)?)?;
    Ok(())
}
