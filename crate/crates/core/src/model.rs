//! Open multiclass Markovian networks with class-independent routing.
//!
//! A [`NetworkSpec`] describes `J` single-server stations fed by a Poisson
//! stream of rate `lambda`. Each arrival joins station `j` as a class `a`
//! customer with probability `assign_prob[a][j]`, is served at rate
//! `service_rate[a][j]`, and after service moves to station `k` with
//! probability `routing[j][k]` (the same for every class) or leaves with the
//! row deficit.
//!
//! [`solve_traffic`] solves the per-class traffic equations
//! `Lambda[a][j] = lambda * q[a][j] + sum_k Lambda[a][k] * r[k][j]` and the
//! visit-count system `Gamma = I + R * Gamma`.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{self, Matrix};

pub const PROB_TOL: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NetworkSpec {
    pub num_servers: usize,
    pub num_classes: usize,
    pub lambda: f64,
    /// `assign_prob[class][server]`
    pub assign_prob: Matrix,
    /// `service_rate[class][server]`
    pub service_rate: Matrix,
    /// `routing[from][to]`
    pub routing: Matrix,
}

impl NetworkSpec {
    pub fn from_json_str(text: &str) -> Result<Self> {
        Ok(serde_json::from_str(text)?)
    }

    pub fn from_path(path: impl AsRef<Path>) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        Self::from_json_str(&text)
    }

    pub fn to_json_pretty(&self) -> String {
        serde_json::to_string_pretty(self).expect("spec serializes")
    }

    /// Exogenous Poisson rate of class `class` customers into `server`.
    pub fn exogenous_rate(&self, class: usize, server: usize) -> f64 {
        self.lambda * self.assign_prob[class][server]
    }

    pub fn max_service_rate(&self) -> f64 {
        self.service_rate
            .iter()
            .flatten()
            .copied()
            .fold(0.0, f64::max)
    }

    /// The common service rate if every class at every server is served at
    /// the same rate.
    pub fn single_rate(&self) -> Option<f64> {
        let first = *self.service_rate.first()?.first()?;
        self.service_rate
            .iter()
            .flatten()
            .all(|&m| m == first)
            .then_some(first)
    }

    /// Uniformization rate `lambda + J * max mu`; equals `lambda + J * mu`
    /// for single-rate networks.
    pub fn uniformization_rate(&self) -> f64 {
        self.lambda + self.num_servers as f64 * self.max_service_rate()
    }

    /// Probability of leaving the network after service at `server`.
    pub fn exit_prob(&self, server: usize) -> f64 {
        (1.0 - self.routing[server].iter().sum::<f64>()).max(0.0)
    }

    pub fn with_lambda(&self, lambda: f64) -> Self {
        Self { lambda, ..self.clone() }
    }

    /// Same network with every service rate replaced by `mu`.
    pub fn with_single_rate(&self, mu: f64) -> Self {
        Self {
            service_rate: vec![vec![mu; self.num_servers]; self.num_classes],
            ..self.clone()
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Check {
    pub name: String,
    pub passed: bool,
    pub detail: String,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct ValidationReport {
    pub checks: Vec<Check>,
    /// Classes whose assignment row is identically zero; allowed, but they
    /// never enter the network.
    pub idle_classes: Vec<usize>,
}

impl ValidationReport {
    pub fn is_valid(&self) -> bool {
        self.checks.iter().all(|c| c.passed)
    }

    pub fn failures(&self) -> impl Iterator<Item = &Check> {
        self.checks.iter().filter(|c| !c.passed)
    }

    pub fn into_result(self) -> Result<()> {
        if self.is_valid() {
            return Ok(());
        }
        let msg = self
            .failures()
            .map(|c| format!("{}: {}", c.name, c.detail))
            .collect::<Vec<_>>()
            .join("; ");
        Err(Error::InvalidSpec(msg))
    }

    fn push(&mut self, name: &str, failures: Vec<String>) {
        let passed = failures.is_empty();
        let detail = if passed { "ok".to_string() } else { failures.join(", ") };
        self.checks.push(Check { name: name.to_string(), passed, detail });
    }
}

fn shape_ok(m: &Matrix, rows: usize, cols: usize) -> bool {
    m.len() == rows && m.iter().all(|r| r.len() == cols)
}

/// Checks every structural invariant of a network description.
///
/// Never fails: problems are collected in the report. Once dimensions are
/// wrong the numeric checks are skipped.
pub fn validate_network(spec: &NetworkSpec) -> ValidationReport {
    let mut report = ValidationReport::default();
    let (j, a) = (spec.num_servers, spec.num_classes);

    let mut dims = Vec::new();
    if j == 0 {
        dims.push("num_servers must be positive".to_string());
    }
    if a == 0 {
        dims.push("num_classes must be positive".to_string());
    }
    if !shape_ok(&spec.assign_prob, a, j) {
        dims.push(format!("assign_prob must be {a}x{j}"));
    }
    if !shape_ok(&spec.service_rate, a, j) {
        dims.push(format!("service_rate must be {a}x{j}"));
    }
    if !shape_ok(&spec.routing, j, j) {
        dims.push(format!("routing must be {j}x{j}"));
    }
    let dims_ok = dims.is_empty();
    report.push("dimensions", dims);
    if !dims_ok {
        return report;
    }

    let mut lam = Vec::new();
    if !spec.lambda.is_finite() || spec.lambda < 0.0 {
        lam.push(format!("lambda must be finite and nonnegative, got {}", spec.lambda));
    }
    report.push("arrival rate", lam);

    let mut probs = Vec::new();
    for (c, row) in spec.assign_prob.iter().enumerate() {
        for (s, &q) in row.iter().enumerate() {
            if !(0.0..=1.0).contains(&q) {
                probs.push(format!("assign_prob[{c}][{s}] = {q} outside [0,1]"));
            }
        }
    }
    report.push("assignment probabilities in [0,1]", probs);

    let total: f64 = spec.assign_prob.iter().flatten().sum();
    let mut sum = Vec::new();
    if (total - 1.0).abs() > PROB_TOL {
        sum.push(format!("assignment probabilities sum to {total}, expected 1"));
    }
    report.push("assignment probabilities sum to 1", sum);

    let mut rates = Vec::new();
    for (c, row) in spec.service_rate.iter().enumerate() {
        for (s, &m) in row.iter().enumerate() {
            if !(m.is_finite() && m > 0.0) {
                rates.push(format!("service_rate[{c}][{s}] = {m} must be positive"));
            }
        }
    }
    report.push("service rates positive", rates);

    let mut route = Vec::new();
    for (r, row) in spec.routing.iter().enumerate() {
        for (k, &p) in row.iter().enumerate() {
            if !(0.0..=1.0).contains(&p) {
                route.push(format!("routing[{r}][{k}] = {p} outside [0,1]"));
            }
        }
    }
    report.push("routing probabilities in [0,1]", route);

    let mut rows = Vec::new();
    for (r, row) in spec.routing.iter().enumerate() {
        let s: f64 = row.iter().sum();
        if s > 1.0 + PROB_TOL {
            rows.push(format!("routing row sum exceeds 1 at server {r} (sum {s})"));
        }
    }
    let rows_ok = rows.is_empty();
    report.push("routing row sums at most 1", rows);

    let mut open = Vec::new();
    if rows_ok {
        match traffic_rates(spec) {
            Err(Error::SingularSystem { .. }) => {
                open.push("network not open: (I-R^T) singular".to_string())
            }
            Err(e) => open.push(e.to_string()),
            Ok(rates) => {
                for (c, row) in rates.iter().enumerate() {
                    for (s, &v) in row.iter().enumerate() {
                        if !v.is_finite() || v < -PROB_TOL {
                            open.push(format!(
                                "network not open: Lambda[{c}][{s}] = {v} not finite and nonnegative"
                            ));
                        }
                    }
                }
            }
        }
    } else {
        open.push("skipped: routing rows invalid".to_string());
    }
    report.push("network open", open);

    report.idle_classes = spec
        .assign_prob
        .iter()
        .enumerate()
        .filter(|(_, row)| row.iter().all(|&q| q == 0.0))
        .map(|(c, _)| c)
        .collect();
    report
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrafficSolution {
    /// Equilibrium arrival rate `Lambda[class][server]`.
    pub arrival_rate: Matrix,
    /// `rho[class][server] = Lambda / mu`.
    pub load: Matrix,
    /// `sum_a rho[a][j]`.
    pub server_load: Vec<f64>,
    /// `Gamma[j][k]`: expected visits to `k` by a customer now at `j`.
    pub visit_counts: Matrix,
    /// `|sum_a sum_k lambda q[a][k] Gamma[k][j] - sum_a Lambda[a][j]|` per server.
    pub conservation_residual: Vec<f64>,
    /// Same left side compared against the exogenous rates `sum_a lambda q[a][j]`.
    pub literal_conservation_residual: Vec<f64>,
    /// Max-norm of `(I - R^T) Lambda_a - lambda q_a` over all classes.
    pub traffic_residual: f64,
}

impl TrafficSolution {
    /// `sum_a Lambda[a][j]`.
    pub fn total_arrival_rate(&self, server: usize) -> f64 {
        self.arrival_rate.iter().map(|row| row[server]).sum()
    }

    pub fn num_servers(&self) -> usize {
        self.visit_counts.len()
    }

    /// Servers violating `sum_a rho[a][j] < 1`.
    pub fn overloaded_servers(&self) -> Vec<usize> {
        self.server_load
            .iter()
            .enumerate()
            .filter(|(_, &r)| r >= 1.0)
            .map(|(j, _)| j)
            .collect()
    }
}

fn i_minus(m: &Matrix) -> Matrix {
    m.iter()
        .enumerate()
        .map(|(i, row)| {
            row.iter()
                .enumerate()
                .map(|(j, &v)| if i == j { 1.0 - v } else { -v })
                .collect()
        })
        .collect()
}

/// Per-class equilibrium rates without any validation.
fn traffic_rates(spec: &NetworkSpec) -> Result<Matrix> {
    let a = i_minus(&linalg::transpose(&spec.routing));
    let rhs: Matrix = spec
        .assign_prob
        .iter()
        .map(|row| row.iter().map(|q| spec.lambda * q).collect())
        .collect();
    linalg::solve_many(&a, &rhs)
}

fn clamp_roundoff(m: &mut Matrix) {
    for v in m.iter_mut().flatten() {
        if *v < 0.0 && *v > -PROB_TOL {
            *v = 0.0;
        }
    }
}

/// `Gamma = (I - R)^{-1}`, the expected visit counts.
pub fn compute_visit_counts(routing: &Matrix) -> Result<Matrix> {
    let n = routing.len();
    if !shape_ok(routing, n, n) {
        return Err(Error::DimensionMismatch {
            expected: format!("{n}x{n} routing matrix"),
            got: "non-square routing matrix".into(),
        });
    }
    let mut gamma = linalg::inverse(&i_minus(routing))?;
    clamp_roundoff(&mut gamma);
    Ok(gamma)
}

pub fn solve_traffic(spec: &NetworkSpec) -> Result<TrafficSolution> {
    let report = validate_network(spec);
    if !report.is_valid() {
        // An effectively closed network surfaces as a singular system.
        if report
            .failures()
            .all(|c| c.name == "network open")
        {
            if let Err(e @ Error::SingularSystem { .. }) = traffic_rates(spec) {
                return Err(e);
            }
        }
        report.into_result()?;
    }

    let mut arrival_rate = traffic_rates(spec)?;
    clamp_roundoff(&mut arrival_rate);
    let visit_counts = compute_visit_counts(&spec.routing)?;

    let load: Matrix = arrival_rate
        .iter()
        .zip(&spec.service_rate)
        .map(|(lr, mr)| lr.iter().zip(mr).map(|(l, m)| l / m).collect())
        .collect();
    let server_load = (0..spec.num_servers)
        .map(|j| load.iter().map(|row| row[j]).sum())
        .collect();

    let it = linalg::transpose(&spec.routing);
    let mut traffic_residual: f64 = 0.0;
    for (c, rates) in arrival_rate.iter().enumerate() {
        for j in 0..spec.num_servers {
            let inflow: f64 = (0..spec.num_servers).map(|k| it[j][k] * rates[k]).sum();
            let r = (rates[j] - inflow - spec.exogenous_rate(c, j)).abs();
            traffic_residual = traffic_residual.max(r);
        }
    }

    let mut sol = TrafficSolution {
        arrival_rate,
        load,
        server_load,
        visit_counts,
        conservation_residual: Vec::new(),
        literal_conservation_residual: Vec::new(),
        traffic_residual,
    };
    sol.conservation_residual = check_conservation(spec, &sol);
    sol.literal_conservation_residual = literal_conservation_residual(spec, &sol);
    Ok(sol)
}

/// Left side of the second conservation identity,
/// `sum_a sum_k lambda q[a][k] Gamma[k][j]`, per server.
fn conservation_lhs(spec: &NetworkSpec, sol: &TrafficSolution) -> Vec<f64> {
    (0..spec.num_servers)
        .map(|j| {
            (0..spec.num_classes)
                .map(|c| {
                    (0..spec.num_servers)
                        .map(|k| spec.exogenous_rate(c, k) * sol.visit_counts[k][j])
                        .sum::<f64>()
                })
                .sum()
        })
        .collect()
}

/// Per-server `|sum_a sum_k lambda q[a][k] Gamma[k][j] - sum_a Lambda[a][j]|`.
pub fn check_conservation(spec: &NetworkSpec, sol: &TrafficSolution) -> Vec<f64> {
    conservation_lhs(spec, sol)
        .into_iter()
        .enumerate()
        .map(|(j, lhs)| (lhs - sol.total_arrival_rate(j)).abs())
        .collect()
}

/// The same identity with exogenous rates on the right; nonzero whenever
/// customers revisit servers.
pub fn literal_conservation_residual(spec: &NetworkSpec, sol: &TrafficSolution) -> Vec<f64> {
    conservation_lhs(spec, sol)
        .into_iter()
        .enumerate()
        .map(|(j, lhs)| {
            let exo: f64 = (0..spec.num_classes).map(|c| spec.exogenous_rate(c, j)).sum();
            (lhs - exo).abs()
        })
        .collect()
}
