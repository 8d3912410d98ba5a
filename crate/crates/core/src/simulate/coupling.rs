//! Chains driven by shared random streams.
//!
//! [`coupled_run`] steps a network `S` and its single-rate reduction `S'`
//! together. Both read the same event uniform against the same slot layout
//! (taken from `S`); `S'` uses smaller departure thresholds `mu/Q2` inside
//! each slot, so whenever both copies of server `j` are busy a departure in
//! `S'` is also a departure in `S`. Routing for the `k`-th departure from `j`
//! comes from the `k`-th draw of `route[j]` in both chains. Together these
//! keep cumulative departures of `S'` at or below those of `S` at every
//! server, hence `total(S') >= total(S)`.
//!
//! [`monotone_coupled_run`] compares one network started from `x0` and from
//! the empty state. Rates are identical, so departure opportunities coincide;
//! routing is drawn once per epoch so simultaneous departures take the same
//! turn, which keeps every queue of the `x0` copy at or above the other.

use std::sync::Arc;

use serde::{Deserialize, Serialize};

use super::{
    run_simulation, Layout, NetworkModel, PolicyKind, RouteCoupling, Simulation, Trace,
};
use crate::error::{Error, Result};
use crate::lyapunov::CountVector;
use crate::model::NetworkSpec;
use crate::reduction::ReducedNetwork;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DominanceReport {
    pub dominance_ok: bool,
    pub first_violation_epoch: Option<u64>,
    pub violations: u64,
    pub epochs: u64,
    /// Smallest observed `upper - lower` (total or per-queue).
    pub min_margin: i64,
}

impl DominanceReport {
    fn new() -> Self {
        Self {
            dominance_ok: true,
            first_violation_epoch: None,
            violations: 0,
            epochs: 0,
            min_margin: i64::MAX,
        }
    }

    fn observe(&mut self, epoch: u64, margin: i64) {
        self.epochs = self.epochs.max(epoch);
        self.min_margin = self.min_margin.min(margin);
        if margin < 0 {
            self.violations += 1;
            self.dominance_ok = false;
            self.first_violation_epoch.get_or_insert(epoch);
        }
    }

    fn ensure(self, what: &str) -> Result<Self> {
        match self.first_violation_epoch {
            None => Ok(self),
            Some(epoch) => Err(Error::CouplingBroken {
                epoch,
                detail: format!("{what} ({} violating epochs)", self.violations),
            }),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CouplingOutcome {
    pub trace_s: Trace,
    pub trace_s_prime: Trace,
    pub report: DominanceReport,
}

/// Runs the `S` / `S'` coupling and reports, without failing, whether the
/// total-count dominance held.
pub fn coupled_run_unchecked(
    red: &ReducedNetwork,
    policy: &PolicyKind,
    x0: Option<&CountVector>,
    horizon: u64,
    seed: u64,
    stride: u64,
) -> Result<CouplingOutcome> {
    let model_s = Arc::new(NetworkModel::probabilistic(&red.base)?);
    let model_p = Arc::new(NetworkModel::probabilistic(&red.reduced_spec)?);
    let layout_s = Layout {
        arrival_prob: red.base.lambda / red.q1,
        slot_width: red.base.max_service_rate() / red.q1,
        rate_scale: 1.0 / red.q1,
    };
    let layout_p = Layout { rate_scale: 1.0 / red.q2, ..layout_s };

    let (mut s, mut p) = match x0 {
        Some(x) => (
            Simulation::with_counts(model_s, policy.clone(), x, seed)?,
            Simulation::with_counts(model_p, policy.clone(), x, seed)?,
        ),
        None => (
            Simulation::new(model_s, policy.clone(), seed),
            Simulation::new(model_p, policy.clone(), seed),
        ),
    };
    s.set_layout(layout_s)?;
    p.set_layout(layout_p)?;

    let mut trace_s = Trace::new(s.model().num_classes(), s.model().num_servers(), stride);
    let mut trace_p = trace_s.clone();
    let mut report = DominanceReport::new();
    report.observe(0, p.state().total() as i64 - s.state().total() as i64);
    for _ in 0..horizon {
        let es = s.step();
        let ep = p.step();
        trace_s.observe(es, s.state());
        trace_p.observe(ep, p.state());
        report.observe(s.state().epoch(), p.state().total() as i64 - s.state().total() as i64);
    }
    Ok(CouplingOutcome { trace_s, trace_s_prime: trace_p, report })
}

/// Like [`coupled_run_unchecked`] but fails with
/// [`Error::CouplingBroken`] on the first epoch where `total(S') < total(S)`.
pub fn coupled_run(
    red: &ReducedNetwork,
    policy: &PolicyKind,
    horizon: u64,
    seed: u64,
    stride: u64,
) -> Result<CouplingOutcome> {
    let out = coupled_run_unchecked(red, policy, None, horizon, seed, stride)?;
    let report = out.report.clone().ensure("total(S') < total(S)")?;
    Ok(CouplingOutcome { report, ..out })
}

/// Per-queue comparison of `model` started in `x0` against the empty start.
/// Violations are recorded, never raised.
pub fn monotone_coupled_run_model(
    model: Arc<NetworkModel>,
    policy: &PolicyKind,
    x0: &CountVector,
    horizon: u64,
    seed: u64,
) -> Result<DominanceReport> {
    let mut hi = Simulation::with_counts(model.clone(), policy.clone(), x0, seed)?;
    let mut lo = Simulation::new(model, policy.clone(), seed);
    hi.set_route_coupling(RouteCoupling::ByEpoch);
    lo.set_route_coupling(RouteCoupling::ByEpoch);
    let j = hi.model().num_servers();
    let margin = |a: &Simulation, b: &Simulation| {
        (0..j)
            .map(|s| a.state().queue_len(s) as i64 - b.state().queue_len(s) as i64)
            .min()
            .unwrap_or(0)
    };
    let mut report = DominanceReport::new();
    report.observe(0, margin(&hi, &lo));
    for _ in 0..horizon {
        hi.step();
        lo.step();
        report.observe(hi.state().epoch(), margin(&hi, &lo));
    }
    Ok(report)
}

/// Checks `y_j^n(x0) >= y_j^n(0)` pathwise for a single-rate
/// class-independent network.
pub fn monotone_coupled_run(
    spec: &NetworkSpec,
    policy: &PolicyKind,
    x0: &CountVector,
    horizon: u64,
    seed: u64,
) -> Result<DominanceReport> {
    if spec.single_rate().is_none() {
        return Err(Error::NotSingleRate);
    }
    let model = Arc::new(NetworkModel::probabilistic(spec)?);
    monotone_coupled_run_model(model, policy, x0, horizon, seed)?.ensure("queue of x0 copy below empty copy")
}

/// Trace of a single chain on the coupled layout; handy for inspecting `S'`
/// alone.
pub fn run_on_layout(
    model: Arc<NetworkModel>,
    policy: &PolicyKind,
    layout: Layout,
    horizon: u64,
    seed: u64,
    stride: u64,
) -> Result<Trace> {
    let mut sim = Simulation::new(model, policy.clone(), seed);
    sim.set_layout(layout)?;
    Ok(run_simulation(&mut sim, horizon, stride))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::solve_traffic;
    use crate::reduction::{build_reduction, Slack};

    fn mm1() -> NetworkSpec {
        NetworkSpec {
            num_servers: 1,
            num_classes: 1,
            lambda: 1.0,
            assign_prob: vec![vec![1.0]],
            service_rate: vec![vec![2.0]],
            routing: vec![vec![0.0]],
        }
    }

    #[test]
    fn degenerate_reduction_gives_identical_traces() {
        let s = mm1();
        let q1 = 2.0 * s.uniformization_rate();
        let red = ReducedNetwork {
            base: s.clone(),
            lambda_prime: 1.0,
            mu: 2.0,
            scale: 1.0,
            eta_slack: vec![vec![0.1]],
            q1,
            q2: q1,
            reduced_spec: s.clone(),
        };
        let out = coupled_run(&red, &PolicyKind::Fifo, 10_000, 4, 1).unwrap();
        assert_eq!(out.trace_s, out.trace_s_prime);
        assert_eq!(out.report.min_margin, 0);
    }

    #[test]
    fn mm1_reduction_dominates() {
        let s = mm1();
        let sol = solve_traffic(&s).unwrap();
        let red = build_reduction(&s, &sol, &Slack::Scalar(0.1)).unwrap();
        for seed in 0..5 {
            let out = coupled_run(&red, &PolicyKind::Fifo, 20_000, seed, 100).unwrap();
            assert!(out.report.dominance_ok);
        }
    }

    #[test]
    fn first_epoch_arrivals_agree() {
        let s = mm1();
        let sol = solve_traffic(&s).unwrap();
        let red = build_reduction(&s, &sol, &Slack::Scalar(0.1)).unwrap();
        for seed in 0..50 {
            let out = coupled_run(&red, &PolicyKind::Fifo, 1, seed, 1).unwrap();
            assert_eq!(out.trace_s.records[0].total, out.trace_s_prime.records[0].total);
        }
    }

    #[test]
    fn zero_start_is_identical() {
        let s = mm1();
        let x0 = CountVector::zeros(1, 1);
        let rep = monotone_coupled_run(&s, &PolicyKind::Fifo, &x0, 5000, 2).unwrap();
        assert_eq!(rep.min_margin, 0);
    }

    #[test]
    fn monotone_needs_single_rate() {
        let mut s = mm1();
        s.num_classes = 2;
        s.assign_prob = vec![vec![0.5], vec![0.5]];
        s.service_rate = vec![vec![2.0], vec![3.0]];
        let x0 = CountVector::zeros(2, 1);
        assert!(matches!(
            monotone_coupled_run(&s, &PolicyKind::Fifo, &x0, 10, 0),
            Err(Error::NotSingleRate)
        ));
    }
}
