//! Reduction of a multi-rate network `S` to a single-rate network `S'`.
//!
//! `S'` keeps the routing and class assignment of `S` but uses a smaller
//! arrival rate `lambda' = s * lambda` and one common service rate `mu`,
//! chosen so that every class load grows slightly:
//!
//! ```text
//! rho[a][j] < Lambda'[a][j] / mu < rho[a][j] + eta[a][j] < 1
//! sum_a Lambda'[a][j] / mu < 1
//! ```
//!
//! Both chains are uniformized (`Q1` for `S`, `Q2` for `S'`) so the per-epoch
//! arrival probability is identical and every server of `S'` is slower per
//! epoch than the matching server of `S` (`mu/Q2 <= mu[a][j]/Q1`).

use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::Matrix;
use crate::model::{solve_traffic, NetworkSpec, TrafficSolution};

const MAX_HALVINGS: usize = 60;

/// The `eta` slack, either one value for every entry or a full matrix.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Slack {
    Scalar(f64),
    Matrix(Matrix),
}

impl Slack {
    /// Per-entry slack that makes the window nonempty whenever
    /// `max_j sum_a Lambda < min mu`.
    ///
    /// A small common `eta` only works when all rates are close: the
    /// sandwich needs `Lambda/(rho + eta) < mu < mu[a][j]`, so a fast class
    /// with little traffic needs `eta >= Lambda/mu - rho`. With `mu*` the
    /// midpoint of `(max_j sum_a Lambda, min mu)` this takes
    /// `eta = Lambda/mu* - rho + min(0.1, (1 - Lambda/mu*)/2)`, which keeps
    /// `rho + eta < 1`.
    pub fn default_for(spec: &NetworkSpec, sol: &TrafficSolution) -> Self {
        let min_mu = spec.service_rate.iter().flatten().copied().fold(f64::INFINITY, f64::min);
        let max_sum = (0..spec.num_servers).map(|s| sol.total_arrival_rate(s)).fold(0.0, f64::max);
        if !(max_sum < min_mu) {
            let max_rho = sol.load.iter().flatten().copied().fold(0.0, f64::max);
            return Slack::Scalar(0.1f64.min((1.0 - max_rho) / 2.0).max(f64::MIN_POSITIVE));
        }
        let target = 0.5 * (max_sum + min_mu);
        Slack::Matrix(
            sol.arrival_rate
                .iter()
                .zip(&sol.load)
                .map(|(lam, rho)| {
                    lam.iter()
                        .zip(rho)
                        .map(|(l, r)| {
                            let u = l / target;
                            (u - r).max(0.0) + 0.1f64.min((1.0 - u) / 2.0)
                        })
                        .collect()
                })
                .collect(),
        )
    }

    fn expand(&self, classes: usize, servers: usize) -> Result<Matrix> {
        match self {
            Slack::Scalar(e) => Ok(vec![vec![*e; servers]; classes]),
            Slack::Matrix(m) => {
                if m.len() != classes || m.iter().any(|r| r.len() != servers) {
                    return Err(Error::DimensionMismatch {
                        expected: format!("{classes}x{servers} eta"),
                        got: format!("{} rows", m.len()),
                    });
                }
                Ok(m.clone())
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReducedNetwork {
    pub base: NetworkSpec,
    pub lambda_prime: f64,
    pub mu: f64,
    /// `lambda' / lambda`.
    pub scale: f64,
    pub eta_slack: Matrix,
    pub q1: f64,
    pub q2: f64,
    pub reduced_spec: NetworkSpec,
}

/// Chooses `lambda'` and `mu` for the single-rate network.
///
/// Starting from `s = 1`, halves `s` until the window
/// `(max(s max_j sum_a Lambda, s max Lambda/(rho+eta)), s min mu)` is
/// nonempty and the midpoint passes every check of [`verify_reduction`].
pub fn build_reduction(spec: &NetworkSpec, sol: &TrafficSolution, eta: &Slack) -> Result<ReducedNetwork> {
    let (a, j) = (spec.num_classes, spec.num_servers);
    let eta = eta.expand(a, j)?;

    if let Some(&bad) = sol.overloaded_servers().first() {
        return Err(Error::Infeasible(format!(
            "traffic condition fails at server {bad} (load {})",
            sol.server_load[bad]
        )));
    }
    for c in 0..a {
        for s in 0..j {
            if !(eta[c][s] > 0.0) {
                return Err(Error::InvalidArgument(format!("eta[{c}][{s}] must be positive")));
            }
            let v = sol.load[c][s] + eta[c][s];
            if v >= 1.0 {
                return Err(Error::BadSlack { class: c, server: s, value: v });
            }
        }
    }

    let min_mu = spec.service_rate.iter().flatten().copied().fold(f64::INFINITY, f64::min);
    let max_sum = (0..j).map(|s| sol.total_arrival_rate(s)).fold(0.0, f64::max);
    if max_sum >= min_mu {
        return Err(Error::Infeasible(format!(
            "max_j sum_a Lambda = {max_sum} >= min mu = {min_mu}: no common rate can be \
             slower than every server and still carry the busiest server's traffic"
        )));
    }
    let mut max_ratio: f64 = 0.0;
    for c in 0..a {
        for s in 0..j {
            let l = sol.arrival_rate[c][s];
            if l > 0.0 {
                max_ratio = max_ratio.max(l / (sol.load[c][s] + eta[c][s]));
            }
        }
    }

    let q1 = 2.0 * (spec.lambda + j as f64 * spec.max_service_rate());
    let mut scale = 1.0;
    for _ in 0..MAX_HALVINGS {
        let lo = (scale * max_sum).max(scale * max_ratio);
        let hi = scale * min_mu;
        if lo < hi {
            let mu = 0.5 * (lo + hi);
            let lambda_prime = scale * spec.lambda;
            let candidate = ReducedNetwork {
                base: spec.clone(),
                lambda_prime,
                mu,
                scale,
                eta_slack: eta.clone(),
                q1,
                q2: q1 * scale,
                reduced_spec: spec.with_lambda(lambda_prime).with_single_rate(mu),
            };
            if verify_reduction(&candidate).all_passed() {
                return Ok(candidate);
            }
        }
        scale *= 0.5;
    }
    Err(Error::Infeasible(format!(
        "no scale in 2^-{MAX_HALVINGS}..1 satisfies every inequality (window lower bound \
         {max_ratio} from the sandwich vs min mu {min_mu})"
    )))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InequalityCheck {
    pub name: String,
    pub passed: bool,
    /// Smallest slack over all entries (positive means satisfied).
    pub margin: f64,
    pub detail: String,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct ReductionReport {
    pub checks: Vec<InequalityCheck>,
}

impl ReductionReport {
    pub fn all_passed(&self) -> bool {
        self.checks.iter().all(|c| c.passed)
    }

    pub fn violations(&self) -> Vec<&str> {
        self.checks.iter().filter(|c| !c.passed).map(|c| c.name.as_str()).collect()
    }

    /// One line per inequality with its margin.
    pub fn ledger(&self) -> String {
        let mut out = String::new();
        for c in &self.checks {
            let mark = if c.passed { "ok  " } else { "FAIL" };
            let _ = writeln!(out, "[{mark}] {:<44} margin {:+.6e}  {}", c.name, c.margin, c.detail);
        }
        out
    }

    fn push(&mut self, name: &str, margin: f64, strict: bool, detail: String) {
        let passed = if strict { margin > 0.0 } else { margin >= 0.0 };
        self.checks.push(InequalityCheck { name: name.into(), passed, margin, detail });
    }
}

fn min_over(values: impl IntoIterator<Item = f64>) -> f64 {
    values.into_iter().fold(f64::INFINITY, f64::min)
}

/// Re-derives `Lambda'` from the reduced spec and checks every inequality
/// independently of how `red` was produced.
pub fn verify_reduction(red: &ReducedNetwork) -> ReductionReport {
    let mut rep = ReductionReport::default();
    let base = &red.base;
    let (a, j) = (base.num_classes, base.num_servers);

    let sol = match solve_traffic(base) {
        Ok(s) => s,
        Err(e) => {
            rep.push("base network solvable", -1.0, true, e.to_string());
            return rep;
        }
    };
    let expected = base.with_lambda(red.lambda_prime).with_single_rate(red.mu);
    rep.push(
        "reduced spec matches (lambda', mu)",
        if red.reduced_spec == expected { 1.0 } else { -1.0 },
        true,
        String::new(),
    );
    let sol_p = match solve_traffic(&red.reduced_spec) {
        Ok(s) => s,
        Err(e) => {
            rep.push("reduced network solvable", -1.0, true, e.to_string());
            return rep;
        }
    };

    rep.push(
        "traffic condition in S",
        min_over(sol.server_load.iter().map(|r| 1.0 - r)),
        true,
        "sum_a rho[a][j] < 1".into(),
    );

    let active = |c: usize, s: usize| sol.arrival_rate[c][s] > 0.0;
    let rho_p = |c: usize, s: usize| sol_p.arrival_rate[c][s] / red.mu;
    let cells = || (0..a).flat_map(move |c| (0..j).map(move |s| (c, s)));

    rep.push(
        "rho' > rho",
        min_over(cells().filter(|&(c, s)| active(c, s)).map(|(c, s)| rho_p(c, s) - sol.load[c][s])),
        true,
        "Lambda'/mu above the original class load".into(),
    );
    rep.push(
        "rho' < rho + eta",
        min_over(
            cells()
                .filter(|&(c, s)| active(c, s))
                .map(|(c, s)| sol.load[c][s] + red.eta_slack[c][s] - rho_p(c, s)),
        ),
        true,
        "Lambda'/mu below rho + eta".into(),
    );
    rep.push(
        "rho + eta < 1",
        min_over(cells().map(|(c, s)| 1.0 - sol.load[c][s] - red.eta_slack[c][s])),
        true,
        String::new(),
    );
    rep.push(
        "server load in S' < 1",
        min_over(sol_p.server_load.iter().map(|r| 1.0 - r)),
        true,
        "sum_a Lambda'[a][j] / mu < 1".into(),
    );
    let max_mu = base.max_service_rate();
    rep.push(
        "Q1 > lambda + J max mu",
        red.q1 - (base.lambda + j as f64 * max_mu),
        true,
        format!("Q1 = {}", red.q1),
    );
    rep.push(
        "Q2 > lambda' + J mu",
        red.q2 - (red.lambda_prime + j as f64 * red.mu),
        true,
        format!("Q2 = {}", red.q2),
    );
    let p1 = base.lambda / red.q1;
    let p2 = red.lambda_prime / red.q2;
    rep.push(
        "arrival-probability match",
        if p1 == p2 { 0.0 } else { -(p1 - p2).abs() },
        false,
        format!("lambda/Q1 = {p1}, lambda'/Q2 = {p2}"),
    );
    rep.push(
        "per-epoch slowness",
        min_over(base.service_rate.iter().flatten().map(|m| m / red.q1 - red.mu / red.q2)),
        false,
        "mu/Q2 <= mu[a][j]/Q1".into(),
    );
    let lin = cells()
        .map(|(c, s)| {
            let want = red.scale * sol.arrival_rate[c][s];
            let got = sol_p.arrival_rate[c][s];
            (got - want).abs() / want.abs().max(1e-300)
        })
        .filter(|r| r.is_finite())
        .fold(0.0, f64::max);
    rep.push(
        "Lambda' = (lambda'/lambda) Lambda",
        1e-12 - lin,
        false,
        format!("max relative error {lin:.3e}"),
    );
    rep.push(
        "scale consistent",
        if base.lambda * red.scale == red.lambda_prime { 0.0 } else { -1.0 },
        false,
        String::new(),
    );
    for c in &mut rep.checks {
        if !c.passed {
            c.name = format!("{} violated", c.name);
        }
    }
    rep
}

#[cfg(test)]
mod tests {
    use super::*;

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
    fn mm1_reduction_hand_values() {
        let s = mm1();
        let sol = solve_traffic(&s).unwrap();
        let red = build_reduction(&s, &sol, &Slack::Scalar(0.1)).unwrap();
        // window (max(1, 1/0.6), 2) at s = 1; midpoint
        let lo = 1.0 / 0.6;
        assert_eq!(red.scale, 1.0);
        assert!((red.mu - 0.5 * (lo + 2.0)).abs() < 1e-15);
        let rho_p = 1.0 / red.mu;
        assert!(0.5 < rho_p && rho_p < 0.6);
        assert_eq!(red.q1, 6.0);
        assert!(verify_reduction(&red).all_passed());
    }

    #[test]
    fn tampered_mu_breaks_sandwich() {
        let s = mm1();
        let sol = solve_traffic(&s).unwrap();
        let mut red = build_reduction(&s, &sol, &Slack::Scalar(0.1)).unwrap();
        red.mu = 2.0;
        red.reduced_spec = s.with_single_rate(2.0);
        let rep = verify_reduction(&red);
        assert!(rep.violations().contains(&"rho' > rho violated"));
    }

    #[test]
    fn tampered_q2_breaks_arrival_match() {
        let s = mm1();
        let sol = solve_traffic(&s).unwrap();
        let mut red = build_reduction(&s, &sol, &Slack::Scalar(0.1)).unwrap();
        red.q2 *= 1.5;
        let rep = verify_reduction(&red);
        assert!(rep.violations().contains(&"arrival-probability match violated"));
    }

    #[test]
    fn documented_infeasible_case() {
        // Two classes at one server: Lambda = (0.9, 0.9), mu = (10, 1).
        let s = NetworkSpec {
            num_servers: 1,
            num_classes: 2,
            lambda: 1.8,
            assign_prob: vec![vec![0.5], vec![0.5]],
            service_rate: vec![vec![10.0], vec![1.0]],
            routing: vec![vec![0.0]],
        };
        let sol = solve_traffic(&s).unwrap();
        assert!((sol.server_load[0] - 0.99).abs() < 1e-12);
        let err = build_reduction(&s, &sol, &Slack::Scalar(0.005)).unwrap_err();
        assert!(matches!(err, Error::Infeasible(_)));
    }

    #[test]
    fn slack_too_large_rejected() {
        let s = mm1();
        let sol = solve_traffic(&s).unwrap();
        assert!(matches!(
            build_reduction(&s, &sol, &Slack::Scalar(0.5)),
            Err(Error::BadSlack { .. })
        ));
    }

    #[test]
    fn single_rate_input_still_reduces() {
        let s = mm1().with_lambda(0.5);
        let sol = solve_traffic(&s).unwrap();
        let red = build_reduction(&s, &sol, &Slack::default_for(&s, &sol)).unwrap();
        assert!(red.mu < red.scale * 2.0);
        assert!(verify_reduction(&red).all_passed());
    }

    #[test]
    fn deterministic() {
        let s = mm1();
        let sol = solve_traffic(&s).unwrap();
        let a = build_reduction(&s, &sol, &Slack::Scalar(0.1)).unwrap();
        let b = build_reduction(&s, &sol, &Slack::Scalar(0.1)).unwrap();
        assert_eq!(a, b);
    }
}
