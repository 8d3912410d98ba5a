//! Python bindings. Structured results cross the boundary as plain dicts
//! and lists, built from the serde form of the Rust types.

use std::sync::Arc;

use pyo3::exceptions::{PyRuntimeError, PyValueError};
use pyo3::prelude::*;
use pyo3::types::PyModule;
use serde::Serialize;

use qnet::cli::parse_priority;
use qnet::exactkernel::{build_kernel, uub_check, verify_lemma};
use qnet::lyapunov::{analytic_drift, brute_force_drift, lyapunov_value, CountVector};
use qnet::model::{solve_traffic, validate_network, NetworkSpec, TrafficSolution};
use qnet::reduction::{build_reduction, verify_reduction, Slack};
use qnet::simulate::{self, coupled_run_unchecked, monotone_coupled_run, NetworkModel, PolicyKind, RoutedScenario};
use qnet::stability::{default_stride, stability_experiment, StabilityThresholds};
use qnet::{gallery, Error};

fn err(e: Error) -> PyErr {
    match e {
        Error::Io(_) => PyRuntimeError::new_err(e.to_string()),
        _ => PyValueError::new_err(e.to_string()),
    }
}

fn to_py<T: Serialize>(py: Python<'_>, value: &T) -> PyResult<Py<PyAny>> {
    let text = serde_json::to_string(value).map_err(|e| PyRuntimeError::new_err(e.to_string()))?;
    Ok(PyModule::import(py, "json")?.call_method1("loads", (text,))?.unbind())
}

fn policy(name: &str, priority: Option<&str>) -> PyResult<PolicyKind> {
    let base = PolicyKind::parse(name, None).ok_or_else(|| PyValueError::new_err(format!("unknown policy {name:?}")))?;
    match (base, priority) {
        (PolicyKind::StaticPriority(_), Some(p)) => Ok(PolicyKind::StaticPriority(parse_priority(p).map_err(err)?)),
        (PolicyKind::StaticPriority(_), None) => Err(PyValueError::new_err("priority policy needs an order")),
        (p, _) => Ok(p),
    }
}

fn counts(x: Vec<Vec<u32>>) -> PyResult<CountVector> {
    CountVector::new(x).map_err(err)
}

/// An open multiclass network together with its traffic solution.
#[pyclass(module = "pyqnet", frozen)]
struct Network {
    spec: NetworkSpec,
    solution: TrafficSolution,
}

impl Network {
    fn build(spec: NetworkSpec) -> PyResult<Self> {
        validate_network(&spec).into_result().map_err(err)?;
        let solution = solve_traffic(&spec).map_err(err)?;
        Ok(Network { spec, solution })
    }
}

#[pymethods]
impl Network {
    #[new]
    fn new(json: &str) -> PyResult<Self> {
        Self::build(NetworkSpec::from_json_str(json).map_err(err)?)
    }

    #[staticmethod]
    fn from_file(path: &str) -> PyResult<Self> {
        Self::build(NetworkSpec::from_path(path).map_err(err)?)
    }

    #[staticmethod]
    fn from_gallery(name: &str) -> PyResult<Self> {
        Self::build(gallery::spec(name).map_err(err)?)
    }

    #[getter]
    fn num_servers(&self) -> usize {
        self.spec.num_servers
    }

    #[getter]
    fn num_classes(&self) -> usize {
        self.spec.num_classes
    }

    #[getter]
    fn arrival_rate(&self) -> f64 {
        self.spec.lambda
    }

    fn to_json(&self) -> String {
        self.spec.to_json_pretty()
    }

    fn with_lambda(&self, lam: f64) -> PyResult<Self> {
        Self::build(self.spec.with_lambda(lam))
    }

    fn validate(&self, py: Python<'_>) -> PyResult<Py<PyAny>> {
        to_py(py, &validate_network(&self.spec))
    }

    fn traffic(&self, py: Python<'_>) -> PyResult<Py<PyAny>> {
        to_py(py, &self.solution)
    }

    fn lyapunov(&self, x: Vec<Vec<u32>>, server: usize) -> PyResult<f64> {
        lyapunov_value(&counts(x)?, &self.solution.visit_counts, server).map_err(err)
    }

    fn drift(&self, x: Vec<Vec<u32>>, server: usize) -> PyResult<f64> {
        analytic_drift(&self.spec, &self.solution, &counts(x)?, server).map_err(err)
    }

    fn brute_force_drift(&self, x: Vec<Vec<u32>>, server: usize) -> PyResult<f64> {
        brute_force_drift(&self.spec, &self.solution, &counts(x)?, server).map_err(err)
    }

    /// Returns `{"reduced": ..., "report": ...}`. `eta` defaults to the
    /// per-entry slack.
    #[pyo3(signature = (eta=None))]
    fn reduce(&self, py: Python<'_>, eta: Option<f64>) -> PyResult<Py<PyAny>> {
        let slack = eta.map_or_else(|| Slack::default_for(&self.spec, &self.solution), Slack::Scalar);
        let red = build_reduction(&self.spec, &self.solution, &slack).map_err(err)?;
        let report = verify_reduction(&red);
        to_py(py, &serde_json::json!({ "reduced": red, "report": report }))
    }

    #[pyo3(signature = (policy_name, horizon, seed, stride=None, priority=None))]
    fn simulate(
        &self,
        py: Python<'_>,
        policy_name: &str,
        horizon: u64,
        seed: u64,
        stride: Option<u64>,
        priority: Option<&str>,
    ) -> PyResult<Py<PyAny>> {
        let p = policy(policy_name, priority)?;
        let stride = stride.unwrap_or_else(|| default_stride(horizon));
        let trace = py.detach(|| simulate::run(&self.spec, &p, horizon, seed, stride)).map_err(err)?;
        to_py(py, &trace)
    }

    /// Couples this network with its reduction on shared streams.
    #[pyo3(signature = (policy_name, horizon, seed, eta=None, stride=None, priority=None))]
    #[allow(clippy::too_many_arguments)]
    fn couple(
        &self,
        py: Python<'_>,
        policy_name: &str,
        horizon: u64,
        seed: u64,
        eta: Option<f64>,
        stride: Option<u64>,
        priority: Option<&str>,
    ) -> PyResult<Py<PyAny>> {
        let p = policy(policy_name, priority)?;
        let slack = eta.map_or_else(|| Slack::default_for(&self.spec, &self.solution), Slack::Scalar);
        let red = build_reduction(&self.spec, &self.solution, &slack).map_err(err)?;
        let stride = stride.unwrap_or_else(|| default_stride(horizon));
        let out = py.detach(|| coupled_run_unchecked(&red, &p, None, horizon, seed, stride)).map_err(err)?;
        to_py(py, &out.report)
    }

    /// Runs from `x0` and from empty on the same streams; single-rate only.
    #[pyo3(signature = (policy_name, x0, horizon, seed, priority=None))]
    fn dominate(
        &self,
        py: Python<'_>,
        policy_name: &str,
        x0: Vec<Vec<u32>>,
        horizon: u64,
        seed: u64,
        priority: Option<&str>,
    ) -> PyResult<Py<PyAny>> {
        let p = policy(policy_name, priority)?;
        let x0 = counts(x0)?;
        let report = py.detach(|| monotone_coupled_run(&self.spec, &p, &x0, horizon, seed)).map_err(err)?;
        to_py(py, &report)
    }

    fn verify_lemma(&self, py: Python<'_>, cap: u32, server: usize, n_max: u64) -> PyResult<Py<PyAny>> {
        let report = py
            .detach(|| build_kernel(&self.spec, cap).and_then(|c| verify_lemma(&c, server, n_max)))
            .map_err(err)?;
        to_py(py, &report)
    }

    fn uub_check(&self, py: Python<'_>, cap: u32, server: usize, k: u64) -> PyResult<Py<PyAny>> {
        let report = py.detach(|| build_kernel(&self.spec, cap).and_then(|c| uub_check(&c, server, k))).map_err(err)?;
        to_py(py, &report)
    }

    /// Multi-seed stability assessment; returns the report only.
    #[pyo3(signature = (policy_name, horizon, seeds, stride=None, priority=None))]
    fn stability(
        &self,
        py: Python<'_>,
        policy_name: &str,
        horizon: u64,
        seeds: Vec<u64>,
        stride: Option<u64>,
        priority: Option<&str>,
    ) -> PyResult<Py<PyAny>> {
        let p = policy(policy_name, priority)?;
        let model = Arc::new(NetworkModel::probabilistic(&self.spec).map_err(err)?);
        let stride = stride.unwrap_or_else(|| default_stride(horizon));
        let thresholds = StabilityThresholds::default();
        let (_, report) = py
            .detach(|| stability_experiment(model, &p, horizon, &seeds, stride, &thresholds))
            .map_err(err)?;
        to_py(py, &report)
    }

    fn __repr__(&self) -> String {
        format!(
            "Network(servers={}, classes={}, lambda={})",
            self.spec.num_servers, self.spec.num_classes, self.spec.lambda
        )
    }
}

#[pyfunction]
fn gallery_names() -> Vec<&'static str> {
    gallery::SPEC_NAMES.to_vec()
}

/// Stability assessment of the fixed-route demo under its own priority order.
#[pyfunction]
#[pyo3(signature = (horizon, seeds, stride=None))]
fn demo_stability(py: Python<'_>, horizon: u64, seeds: Vec<u64>, stride: Option<u64>) -> PyResult<Py<PyAny>> {
    let scenario: RoutedScenario = gallery::rybko_stolyar_demo();
    let model = Arc::new(NetworkModel::routed(&scenario).map_err(err)?);
    let p = scenario.policy.clone();
    let stride = stride.unwrap_or_else(|| default_stride(horizon));
    let thresholds = StabilityThresholds::default();
    let (_, report) =
        py.detach(|| stability_experiment(model, &p, horizon, &seeds, stride, &thresholds)).map_err(err)?;
    to_py(py, &report)
}

#[pymodule]
fn pyqnet(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<Network>()?;
    m.add_function(wrap_pyfunction!(gallery_names, m)?)?;
    m.add_function(wrap_pyfunction!(demo_stability, m)?)?;
    Ok(())
}
