//! Per-server Lyapunov functions and their drifts.
//!
//! `V_j(x) = sum_a sum_k x[a][k] * Gamma[k][j]` is the expected number of
//! future visits to server `j` by everybody currently in the network. In a
//! single-rate network its one-step drift is
//!
//! ```text
//! Q * dV_j(x) = sum_a Lambda[a][j] - mu * [x_j > 0],   Q = lambda + J mu
//! ```
//!
//! which depends on the state only through whether server `j` is busy.
//! [`brute_force_drift`] recomputes the same quantity by enumerating every
//! one-step transition.

use std::sync::Arc;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{NetworkSpec, TrafficSolution};
use crate::simulate::{substream_seed, NetworkModel, PolicyKind, Simulation};

/// Customer counts `x[class][server]`.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct CountVector(Vec<Vec<u32>>);

impl CountVector {
    pub fn new(counts: Vec<Vec<u32>>) -> Result<Self> {
        let width = counts.first().map_or(0, Vec::len);
        if counts.iter().any(|r| r.len() != width) {
            return Err(Error::DimensionMismatch {
                expected: "rectangular counts".into(),
                got: "ragged rows".into(),
            });
        }
        Ok(Self(counts))
    }

    pub fn zeros(classes: usize, servers: usize) -> Self {
        Self(vec![vec![0; servers]; classes])
    }

    /// Single-class counts.
    pub fn single(counts: &[u32]) -> Self {
        Self(vec![counts.to_vec()])
    }

    pub fn num_classes(&self) -> usize {
        self.0.len()
    }

    pub fn num_servers(&self) -> usize {
        self.0.first().map_or(0, Vec::len)
    }

    pub fn get(&self, class: usize, server: usize) -> u32 {
        self.0[class][server]
    }

    pub fn set(&mut self, class: usize, server: usize, value: u32) {
        self.0[class][server] = value;
    }

    /// `x_j = sum_a x[a][j]`.
    pub fn at_server(&self, server: usize) -> u32 {
        self.0.iter().map(|r| r[server]).sum()
    }

    pub fn total(&self) -> u64 {
        self.0.iter().flatten().map(|&v| v as u64).sum()
    }

    pub fn is_zero(&self) -> bool {
        self.0.iter().flatten().all(|&v| v == 0)
    }

    pub fn rows(&self) -> &[Vec<u32>] {
        &self.0
    }

    pub fn add(&self, other: &CountVector) -> Result<CountVector> {
        self.same_shape(other)?;
        Ok(Self(
            self.0
                .iter()
                .zip(&other.0)
                .map(|(a, b)| a.iter().zip(b).map(|(x, y)| x + y).collect())
                .collect(),
        ))
    }

    fn same_shape(&self, other: &CountVector) -> Result<()> {
        if self.num_classes() != other.num_classes() || self.num_servers() != other.num_servers() {
            return Err(Error::DimensionMismatch {
                expected: format!("{}x{}", self.num_classes(), self.num_servers()),
                got: format!("{}x{}", other.num_classes(), other.num_servers()),
            });
        }
        Ok(())
    }

    /// Every count vector of the given shape with total at most `max_total`.
    pub fn enumerate(classes: usize, servers: usize, max_total: u32) -> Vec<CountVector> {
        let cells = classes * servers;
        let mut out = Vec::new();
        let mut cur = vec![0u32; cells];
        fn rec(i: usize, left: u32, cur: &mut Vec<u32>, out: &mut Vec<Vec<u32>>) {
            if i == cur.len() {
                out.push(cur.clone());
                return;
            }
            for v in 0..=left {
                cur[i] = v;
                rec(i + 1, left - v, cur, out);
            }
            cur[i] = 0;
        }
        let mut flat = Vec::new();
        rec(0, max_total, &mut cur, &mut flat);
        for f in flat {
            out.push(Self(f.chunks(servers.max(1)).map(<[u32]>::to_vec).collect()));
        }
        out
    }
}

fn check_dims(x: &CountVector, gamma: &[Vec<f64>], j: usize) -> Result<()> {
    let n = gamma.len();
    if x.num_servers() != n || gamma.iter().any(|r| r.len() != n) || j >= n {
        return Err(Error::DimensionMismatch {
            expected: format!("{n} servers and server index < {n}"),
            got: format!("{} servers, index {j}", x.num_servers()),
        });
    }
    Ok(())
}

pub fn lyapunov_value(x: &CountVector, gamma: &[Vec<f64>], j: usize) -> Result<f64> {
    check_dims(x, gamma, j)?;
    Ok(x.rows()
        .iter()
        .map(|row| row.iter().enumerate().map(|(k, &n)| n as f64 * gamma[k][j]).sum::<f64>())
        .sum())
}

/// Closed-form one-step drift `(sum_a Lambda[a][j] - mu [x_j > 0]) / Q`.
pub fn analytic_drift(spec: &NetworkSpec, sol: &TrafficSolution, x: &CountVector, j: usize) -> Result<f64> {
    let mu = spec.single_rate().ok_or(Error::NotSingleRate)?;
    check_dims(x, &sol.visit_counts, j)?;
    let q = spec.lambda + spec.num_servers as f64 * mu;
    let busy = if x.at_server(j) > 0 { mu } else { 0.0 };
    Ok((sol.total_arrival_rate(j) - busy) / q)
}

/// Lowest-index class present at the server; stands in for a static
/// priority discipline when only counts are known.
pub fn lowest_class_in_service(x: &CountVector, server: usize) -> Option<usize> {
    (0..x.num_classes()).find(|&c| x.get(c, server) > 0)
}

/// One-step transition out of `x`.
#[derive(Debug, Clone, PartialEq)]
pub struct Transition {
    pub prob: f64,
    pub tag: crate::simulate::EventTag,
    pub next: CountVector,
}

/// Every one-step transition of the uniformized chain from `x`
/// (`Q = lambda + J max mu`). `in_service(x, m)` names the class in
/// service at busy server `m`.
pub fn transitions<F>(spec: &NetworkSpec, x: &CountVector, in_service: F) -> Result<Vec<Transition>>
where
    F: Fn(&CountVector, usize) -> Option<usize>,
{
    use crate::simulate::EventTag;
    let (a, jn) = (spec.num_classes, spec.num_servers);
    if x.num_classes() != a || x.num_servers() != jn {
        return Err(Error::DimensionMismatch {
            expected: format!("{a}x{jn} counts"),
            got: format!("{}x{}", x.num_classes(), x.num_servers()),
        });
    }
    let q = spec.uniformization_rate();
    let mut out = Vec::new();
    let mut used = 0.0;

    for c in 0..a {
        for s in 0..jn {
            let p = spec.exogenous_rate(c, s) / q;
            if p > 0.0 {
                let mut next = x.clone();
                next.set(c, s, x.get(c, s) + 1);
                out.push(Transition { prob: p, tag: EventTag::E1, next });
                used += p;
            }
        }
    }
    for m in 0..jn {
        if x.at_server(m) == 0 {
            continue;
        }
        let c = in_service(x, m)
            .filter(|&c| x.get(c, m) > 0)
            .ok_or_else(|| Error::InvalidArgument(format!("no customer in service at busy server {m}")))?;
        let rate = spec.service_rate[c][m] / q;
        for n in 0..jn {
            let p = rate * spec.routing[m][n];
            if p > 0.0 {
                let mut next = x.clone();
                next.set(c, m, x.get(c, m) - 1);
                next.set(c, n, next.get(c, n) + 1);
                out.push(Transition { prob: p, tag: EventTag::E2, next });
                used += p;
            }
        }
        let p = rate * spec.exit_prob(m);
        if p > 0.0 {
            let mut next = x.clone();
            next.set(c, m, x.get(c, m) - 1);
            out.push(Transition { prob: p, tag: EventTag::E3, next });
            used += p;
        }
    }
    out.push(Transition { prob: 1.0 - used, tag: EventTag::E4, next: x.clone() });
    Ok(out)
}

/// Expected one-step change of `V_j` by explicit enumeration, with the
/// in-service class chosen by `in_service`.
pub fn brute_force_drift_with<F>(
    spec: &NetworkSpec,
    sol: &TrafficSolution,
    x: &CountVector,
    j: usize,
    in_service: F,
) -> Result<f64>
where
    F: Fn(&CountVector, usize) -> Option<usize>,
{
    let gamma = &sol.visit_counts;
    let here = lyapunov_value(x, gamma, j)?;
    let mut drift = 0.0;
    for t in transitions(spec, x, in_service)? {
        drift += t.prob * (lyapunov_value(&t.next, gamma, j)? - here);
    }
    Ok(drift)
}

pub fn brute_force_drift(spec: &NetworkSpec, sol: &TrafficSolution, x: &CountVector, j: usize) -> Result<f64> {
    brute_force_drift_with(spec, sol, x, j, lowest_class_in_service)
}

/// Brute-force drift under every possible choice of in-service classes.
/// For single-rate networks all entries coincide.
pub fn drift_over_service_choices(
    spec: &NetworkSpec,
    sol: &TrafficSolution,
    x: &CountVector,
    j: usize,
) -> Result<Vec<f64>> {
    let busy: Vec<(usize, Vec<usize>)> = (0..spec.num_servers)
        .filter(|&m| x.at_server(m) > 0)
        .map(|m| (m, (0..spec.num_classes).filter(|&c| x.get(c, m) > 0).collect()))
        .collect();
    let mut choice = vec![0usize; busy.len()];
    let mut out = Vec::new();
    loop {
        let pick = |_: &CountVector, m: usize| {
            busy.iter().position(|(s, _)| *s == m).map(|i| busy[i].1[choice[i]])
        };
        out.push(brute_force_drift_with(spec, sol, x, j, pick)?);
        let mut i = 0;
        loop {
            if i == busy.len() {
                return Ok(out);
            }
            choice[i] += 1;
            if choice[i] < busy[i].1.len() {
                break;
            }
            choice[i] = 0;
            i += 1;
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DriftProfile {
    /// Upper bound on the drift of `V_j` everywhere.
    pub eta: Vec<f64>,
    /// Drift decrease of `V_j` whenever server `j` is busy.
    pub epsilon: Vec<f64>,
    /// Estimated `lim Delta^k V_j / k`, when available.
    pub cstar: Option<Vec<f64>>,
    pub uniformization_rate: f64,
}

impl DriftProfile {
    pub fn all_negative_when_busy(&self) -> bool {
        self.epsilon.iter().all(|&e| e > 0.0)
    }
}

pub fn drift_profile(spec: &NetworkSpec, sol: &TrafficSolution) -> Result<DriftProfile> {
    let mu = spec.single_rate().ok_or(Error::NotSingleRate)?;
    let q = spec.lambda + spec.num_servers as f64 * mu;
    let totals: Vec<f64> = (0..spec.num_servers).map(|j| sol.total_arrival_rate(j)).collect();
    Ok(DriftProfile {
        eta: totals.iter().map(|l| l / q).collect(),
        epsilon: totals.iter().map(|l| (mu - l) / q).collect(),
        cstar: None,
        uniformization_rate: q,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Estimate {
    pub mean: f64,
    pub stderr: f64,
}

impl Estimate {
    fn from_samples(samples: &[f64]) -> Self {
        let n = samples.len() as f64;
        let mean = samples.iter().sum::<f64>() / n;
        let var = if samples.len() > 1 {
            samples.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0)
        } else {
            0.0
        };
        Self { mean, stderr: (var / n).sqrt() }
    }
}

/// Monte-Carlo estimate of `E[V_j(X^k) | X^0 = x] - V_j(x)` for every server.
///
/// Replication `r` uses seed `substream_seed(seed, r)`, so the estimate does
/// not depend on how replications are scheduled across threads.
pub fn multi_step_drift(
    spec: &NetworkSpec,
    sol: &TrafficSolution,
    policy: &PolicyKind,
    x: &CountVector,
    k: u64,
    replications: u64,
    seed: u64,
) -> Result<Vec<Estimate>> {
    if k == 0 || replications == 0 {
        return Err(Error::InvalidArgument("k and replications must be at least 1".into()));
    }
    let model = Arc::new(NetworkModel::probabilistic(spec)?);
    let jn = spec.num_servers;
    let gamma = &sol.visit_counts;
    let start: Vec<f64> = (0..jn).map(|j| lyapunov_value(x, gamma, j)).collect::<Result<_>>()?;

    let samples: Vec<Vec<f64>> = (0..replications)
        .into_par_iter()
        .map(|r| -> Result<Vec<f64>> {
            let mut sim = Simulation::with_counts(model.clone(), policy.clone(), x, substream_seed(seed, r))?;
            for _ in 0..k {
                sim.step();
            }
            let end = sim.state().count_vector();
            (0..jn)
                .map(|j| Ok(lyapunov_value(&end, gamma, j)? - start[j]))
                .collect()
        })
        .collect::<Result<_>>()?;

    Ok((0..jn)
        .map(|j| {
            let col: Vec<f64> = samples.iter().map(|s| s[j]).collect();
            Estimate::from_samples(&col)
        })
        .collect())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DriftRow {
    pub server: usize,
    pub state_id: usize,
    pub k: u64,
    /// `Delta^k V_j(x) / k`.
    pub estimate: f64,
    pub stderr: f64,
    pub analytic: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct UubTable {
    pub states: Vec<CountVector>,
    pub rows: Vec<DriftRow>,
    /// `(server, state_id, k)` where the estimate exceeds the zero-state
    /// estimate by more than three pooled standard errors.
    pub exceedances: Vec<(usize, usize, u64)>,
    pub cstar: Vec<f64>,
}

impl UubTable {
    pub fn bounded_by_zero_state(&self) -> bool {
        self.exceedances.is_empty()
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from("server,state_id,k,estimate,stderr,analytic\n");
        for r in &self.rows {
            let analytic = r.analytic.map_or(String::new(), |a| format!("{a}"));
            out.push_str(&format!(
                "{},{},{},{},{},{}\n",
                r.server, r.state_id, r.k, r.estimate, r.stderr, analytic
            ));
        }
        out
    }

    pub fn row(&self, server: usize, state_id: usize, k: u64) -> Option<&DriftRow> {
        self.rows
            .iter()
            .find(|r| r.server == server && r.state_id == state_id && r.k == k)
    }
}

/// Table of `Delta^k V_j(x)/k` over states and horizons, with the check that
/// no state's drift average exceeds the empty state's.
///
/// `states` must contain the zero state. `cstar` is the slope of
/// `Delta^k V_j(0)` between the two largest `k`.
pub fn uub_estimate(
    spec: &NetworkSpec,
    sol: &TrafficSolution,
    policy: &PolicyKind,
    states: &[CountVector],
    ks: &[u64],
    replications: u64,
    seed: u64,
) -> Result<UubTable> {
    let zero_id = states
        .iter()
        .position(CountVector::is_zero)
        .ok_or_else(|| Error::InvalidArgument("states must include the zero state".into()))?;
    if ks.is_empty() {
        return Err(Error::InvalidArgument("need at least one k".into()));
    }
    let jn = spec.num_servers;
    let mut rows = Vec::new();
    let mut raw = std::collections::HashMap::new();
    for (sid, x) in states.iter().enumerate() {
        for (ki, &k) in ks.iter().enumerate() {
            let est = multi_step_drift(
                spec,
                sol,
                policy,
                x,
                k,
                replications,
                substream_seed(seed, (sid * ks.len() + ki) as u64),
            )?;
            for (j, e) in est.iter().enumerate() {
                raw.insert((j, sid, k), *e);
                let analytic = if k == 1 { analytic_drift(spec, sol, x, j).ok() } else { None };
                rows.push(DriftRow {
                    server: j,
                    state_id: sid,
                    k,
                    estimate: e.mean / k as f64,
                    stderr: e.stderr / k as f64,
                    analytic,
                });
            }
        }
    }

    let mut exceedances = Vec::new();
    for j in 0..jn {
        for &k in ks {
            let z = raw[&(j, zero_id, k)];
            for sid in 0..states.len() {
                let e = raw[&(j, sid, k)];
                let pooled = (e.stderr.powi(2) + z.stderr.powi(2)).sqrt();
                if e.mean > z.mean + 3.0 * pooled {
                    exceedances.push((j, sid, k));
                }
            }
        }
    }

    let mut sorted = ks.to_vec();
    sorted.sort_unstable();
    sorted.dedup();
    let cstar = (0..jn)
        .map(|j| match sorted.as_slice() {
            [.., k1, k2] => (raw[&(j, zero_id, *k2)].mean - raw[&(j, zero_id, *k1)].mean) / (k2 - k1) as f64,
            [k] => raw[&(j, zero_id, *k)].mean / *k as f64,
            [] => unreachable!(),
        })
        .collect();

    Ok(UubTable { states: states.to_vec(), rows, exceedances, cstar })
}
