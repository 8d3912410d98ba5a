//! The networks the simulator can drive: probabilistic class-independent
//! routing ([`NetworkSpec`]) and fixed per-class routes ([`RoutedScenario`]).

use std::path::Path;

use serde::{Deserialize, Serialize};

use super::policy::{PolicyKind, PriorityOrder};
use crate::error::{Error, Result};
use crate::model::NetworkSpec;

/// A network where every customer type follows a fixed list of stations.
///
/// Routing depends on the customer type, so these networks sit outside the
/// class-independent setting; they exist to show what goes wrong there.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RoutedScenario {
    /// `routes[type]`: stations visited in order.
    pub routes: Vec<Vec<usize>>,
    /// `mean_service[type][leg]`.
    pub mean_service: Vec<Vec<f64>>,
    /// Poisson arrival rate per type; defaults to 1 for every type.
    #[serde(default)]
    pub arrival_rates: Option<Vec<f64>>,
    /// Priority rankings refer to buffers numbered type-major:
    /// `(type 0, leg 0), (type 0, leg 1), ..., (type 1, leg 0), ...`.
    pub policy: PolicyKind,
}

impl RoutedScenario {
    pub fn from_path(path: impl AsRef<Path>) -> Result<Self> {
        let s: Self = serde_json::from_str(&std::fs::read_to_string(path)?)?;
        s.validate()?;
        Ok(s)
    }

    pub fn from_json_str(text: &str) -> Result<Self> {
        let s: Self = serde_json::from_str(text)?;
        s.validate()?;
        Ok(s)
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::InvalidSpec(m));
        if self.routes.is_empty() {
            return bad("scenario needs at least one route".into());
        }
        if self.mean_service.len() != self.routes.len() {
            return bad("mean_service must have one row per route".into());
        }
        for (t, (route, means)) in self.routes.iter().zip(&self.mean_service).enumerate() {
            if route.is_empty() {
                return bad(format!("route {t} is empty"));
            }
            if route.len() != means.len() {
                return bad(format!("route {t} has {} legs but {} service means", route.len(), means.len()));
            }
            if means.iter().any(|&m| !(m.is_finite() && m > 0.0)) {
                return bad(format!("route {t} has a nonpositive mean service time"));
            }
        }
        let rates = self.type_rates();
        if rates.len() != self.routes.len() || rates.iter().any(|&r| !(r.is_finite() && r >= 0.0)) {
            return bad("arrival_rates must be one nonnegative rate per route".into());
        }
        Ok(())
    }

    pub fn type_rates(&self) -> Vec<f64> {
        self.arrival_rates
            .clone()
            .unwrap_or_else(|| vec![1.0; self.routes.len()])
    }

    pub fn num_types(&self) -> usize {
        self.routes.len()
    }

    pub fn num_servers(&self) -> usize {
        self.routes.iter().flatten().copied().max().map_or(0, |m| m + 1)
    }

    pub fn buffer_offsets(&self) -> Vec<usize> {
        self.routes
            .iter()
            .scan(0, |acc, r| {
                let off = *acc;
                *acc += r.len();
                Some(off)
            })
            .collect()
    }

    pub fn num_buffers(&self) -> usize {
        self.routes.iter().map(Vec::len).sum()
    }

    /// Nominal load per station: `sum over visits of rate * mean service`.
    pub fn station_loads(&self) -> Vec<f64> {
        let mut loads = vec![0.0; self.num_servers()];
        for ((route, means), rate) in self.routes.iter().zip(&self.mean_service).zip(self.type_rates()) {
            for (&s, &m) in route.iter().zip(means) {
                loads[s] += rate * m;
            }
        }
        loads
    }

    /// Replaces the fixed routes with class-independent probabilistic routing
    /// carrying the same mean flows between stations.
    ///
    /// Classes are the customer types, each entering at its first station.
    /// A class's service rate at a station is the inverse of its mean service
    /// time there (averaged over visits), or of the station-wide mean for
    /// stations the type never visits. The returned policy ranks classes per
    /// station by the scenario's buffer priority.
    pub fn class_independent_analogue(&self) -> Result<(NetworkSpec, PolicyKind)> {
        self.validate()?;
        let j = self.num_servers();
        let a = self.num_types();
        let rates = self.type_rates();
        let lambda: f64 = rates.iter().sum();
        if lambda <= 0.0 {
            return Err(Error::InvalidSpec("scenario has no arrivals".into()));
        }

        let mut flow = vec![vec![0.0; j]; j];
        let mut throughput = vec![0.0; j];
        let mut q = vec![vec![0.0; j]; a];
        for (t, route) in self.routes.iter().enumerate() {
            q[t][route[0]] = rates[t] / lambda;
            for (leg, &s) in route.iter().enumerate() {
                throughput[s] += rates[t];
                if let Some(&next) = route.get(leg + 1) {
                    flow[s][next] += rates[t];
                }
            }
        }
        let routing: Vec<Vec<f64>> = (0..j)
            .map(|s| {
                (0..j)
                    .map(|k| if throughput[s] > 0.0 { flow[s][k] / throughput[s] } else { 0.0 })
                    .collect()
            })
            .collect();

        let mut station_sum = vec![0.0; j];
        let mut station_n = vec![0usize; j];
        for (route, means) in self.routes.iter().zip(&self.mean_service) {
            for (&s, &m) in route.iter().zip(means) {
                station_sum[s] += m;
                station_n[s] += 1;
            }
        }
        let mut service_rate = vec![vec![0.0; j]; a];
        for t in 0..a {
            for s in 0..j {
                let visits: Vec<f64> = self.routes[t]
                    .iter()
                    .zip(&self.mean_service[t])
                    .filter(|(&st, _)| st == s)
                    .map(|(_, &m)| m)
                    .collect();
                let mean = if !visits.is_empty() {
                    visits.iter().sum::<f64>() / visits.len() as f64
                } else if station_n[s] > 0 {
                    station_sum[s] / station_n[s] as f64
                } else {
                    1.0
                };
                service_rate[t][s] = 1.0 / mean;
            }
        }

        let policy = match &self.policy {
            PolicyKind::StaticPriority(order) => {
                let offsets = self.buffer_offsets();
                let per_server = (0..j)
                    .map(|s| {
                        let ranked = order.service_order(s, self.num_buffers());
                        let rank_of = |b: usize| ranked.iter().position(|&x| x == b).unwrap();
                        let mut classes: Vec<(usize, usize)> = (0..a)
                            .map(|t| {
                                let best = self.routes[t]
                                    .iter()
                                    .enumerate()
                                    .filter(|(_, &st)| st == s)
                                    .map(|(leg, _)| rank_of(offsets[t] + leg))
                                    .min()
                                    .unwrap_or(usize::MAX);
                                (best, t)
                            })
                            .collect();
                        classes.sort();
                        classes.into_iter().map(|(_, t)| t).collect()
                    })
                    .collect();
                PolicyKind::StaticPriority(PriorityOrder::PerServer(per_server))
            }
            other => other.clone(),
        };

        let spec = NetworkSpec {
            num_servers: j,
            num_classes: a,
            lambda,
            assign_prob: q,
            service_rate,
            routing,
        };
        Ok((spec, policy))
    }
}

/// Precomputed sampling tables for a probabilistic network.
#[derive(Debug, Clone)]
pub struct ProbabilisticModel {
    spec: NetworkSpec,
    /// Cumulative assignment probabilities with their `(class, server)`.
    assign_cdf: Vec<(f64, usize, usize)>,
    route_cdf: Vec<Vec<f64>>,
}

#[derive(Debug, Clone)]
pub struct RoutedModel {
    scenario: RoutedScenario,
    offsets: Vec<usize>,
    type_cdf: Vec<f64>,
    lambda: f64,
    rate: Vec<Vec<f64>>,
}

#[derive(Debug, Clone)]
pub enum NetworkModel {
    Probabilistic(ProbabilisticModel),
    Routed(RoutedModel),
}

fn cdf(weights: impl IntoIterator<Item = f64>) -> Vec<f64> {
    weights
        .into_iter()
        .scan(0.0, |acc, w| {
            *acc += w;
            Some(*acc)
        })
        .collect()
}

impl NetworkModel {
    pub fn probabilistic(spec: &NetworkSpec) -> Result<Self> {
        crate::model::validate_network(spec).into_result()?;
        let mut assign_cdf = Vec::new();
        let mut acc = 0.0;
        for (c, row) in spec.assign_prob.iter().enumerate() {
            for (s, &q) in row.iter().enumerate() {
                if q > 0.0 {
                    acc += q;
                    assign_cdf.push((acc, c, s));
                }
            }
        }
        let route_cdf = spec.routing.iter().map(|row| cdf(row.iter().copied())).collect();
        Ok(NetworkModel::Probabilistic(ProbabilisticModel {
            spec: spec.clone(),
            assign_cdf,
            route_cdf,
        }))
    }

    pub fn routed(scenario: &RoutedScenario) -> Result<Self> {
        scenario.validate()?;
        let rates = scenario.type_rates();
        let lambda: f64 = rates.iter().sum();
        let type_cdf = cdf(rates.iter().map(|r| if lambda > 0.0 { r / lambda } else { 0.0 }));
        let rate = scenario
            .mean_service
            .iter()
            .map(|row| row.iter().map(|m| 1.0 / m).collect())
            .collect();
        Ok(NetworkModel::Routed(RoutedModel {
            offsets: scenario.buffer_offsets(),
            scenario: scenario.clone(),
            type_cdf,
            lambda,
            rate,
        }))
    }

    pub fn spec(&self) -> Option<&NetworkSpec> {
        match self {
            NetworkModel::Probabilistic(p) => Some(&p.spec),
            NetworkModel::Routed(_) => None,
        }
    }

    pub fn num_servers(&self) -> usize {
        match self {
            NetworkModel::Probabilistic(p) => p.spec.num_servers,
            NetworkModel::Routed(r) => r.scenario.num_servers(),
        }
    }

    pub fn num_classes(&self) -> usize {
        match self {
            NetworkModel::Probabilistic(p) => p.spec.num_classes,
            NetworkModel::Routed(r) => r.scenario.num_types(),
        }
    }

    pub fn num_buffers(&self) -> usize {
        match self {
            NetworkModel::Probabilistic(p) => p.spec.num_classes,
            NetworkModel::Routed(r) => r.scenario.num_buffers(),
        }
    }

    pub fn arrival_rate(&self) -> f64 {
        match self {
            NetworkModel::Probabilistic(p) => p.spec.lambda,
            NetworkModel::Routed(r) => r.lambda,
        }
    }

    pub fn max_rate(&self) -> f64 {
        match self {
            NetworkModel::Probabilistic(p) => p.spec.max_service_rate(),
            NetworkModel::Routed(r) => r.rate.iter().flatten().copied().fold(0.0, f64::max),
        }
    }

    /// `lambda + J * max rate`.
    pub fn uniformization_rate(&self) -> f64 {
        self.arrival_rate() + self.num_servers() as f64 * self.max_rate()
    }

    /// Maps one uniform to `(class, server, leg)` of an exogenous arrival.
    pub fn sample_arrival(&self, u: f64) -> (usize, usize, usize) {
        match self {
            NetworkModel::Probabilistic(p) => {
                let &(_, c, s) = p
                    .assign_cdf
                    .iter()
                    .find(|(acc, _, _)| u < *acc)
                    .unwrap_or_else(|| p.assign_cdf.last().expect("some class enters"));
                (c, s, 0)
            }
            NetworkModel::Routed(r) => {
                let t = r
                    .type_cdf
                    .iter()
                    .position(|&acc| u < acc)
                    .unwrap_or(r.type_cdf.len() - 1);
                (t, r.scenario.routes[t][0], 0)
            }
        }
    }

    pub fn service_rate(&self, class: usize, leg: usize, server: usize) -> f64 {
        match self {
            NetworkModel::Probabilistic(p) => p.spec.service_rate[class][server],
            NetworkModel::Routed(r) => r.rate[class][leg],
        }
    }

    pub fn buffer(&self, class: usize, leg: usize) -> usize {
        match self {
            NetworkModel::Probabilistic(_) => class,
            NetworkModel::Routed(r) => r.offsets[class] + leg,
        }
    }

    /// Where a customer finishing service at `from` goes next, `None` for
    /// exit. Probabilistic routing consumes `u`; fixed routes ignore it.
    pub fn next_server(&self, class: usize, leg: usize, from: usize, u: f64) -> Option<usize> {
        match self {
            NetworkModel::Probabilistic(p) => p.route_cdf[from].iter().position(|&acc| u < acc),
            NetworkModel::Routed(r) => r.scenario.routes[class].get(leg + 1).copied(),
        }
    }

    /// Leg at which a type first visits `server` (routed), `0` otherwise.
    pub fn entry_leg(&self, class: usize, server: usize) -> Option<usize> {
        match self {
            NetworkModel::Probabilistic(_) => Some(0),
            NetworkModel::Routed(r) => r.scenario.routes[class].iter().position(|&s| s == server),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn rs() -> RoutedScenario {
        RoutedScenario {
            routes: vec![vec![0, 1], vec![1, 0]],
            mean_service: vec![vec![0.1, 0.6], vec![0.1, 0.6]],
            arrival_rates: None,
            policy: PolicyKind::StaticPriority(PriorityOrder::Global(vec![1, 3, 0, 2])),
        }
    }

    #[test]
    fn station_loads_and_buffers() {
        let s = rs();
        let loads = s.station_loads();
        assert!((loads[0] - 0.7).abs() < 1e-12 && (loads[1] - 0.7).abs() < 1e-12);
        assert_eq!(s.buffer_offsets(), vec![0, 2]);
        assert_eq!(s.num_buffers(), 4);
    }

    #[test]
    fn analogue_preserves_mean_flows() {
        let (spec, policy) = rs().class_independent_analogue().unwrap();
        assert_eq!(spec.routing, vec![vec![0.0, 0.5], vec![0.5, 0.0]]);
        let sol = crate::model::solve_traffic(&spec).unwrap();
        assert!((sol.total_arrival_rate(0) - 2.0).abs() < 1e-12);
        // second-leg customers (type 1 at station 0, type 0 at station 1) first
        assert_eq!(
            policy,
            PolicyKind::StaticPriority(PriorityOrder::PerServer(vec![vec![1, 0], vec![0, 1]]))
        );
        assert!(sol.server_load.iter().all(|&r| r < 1.0));
    }

    #[test]
    fn routed_next_hop_follows_route() {
        let m = NetworkModel::routed(&rs()).unwrap();
        assert_eq!(m.next_server(0, 0, 0, 0.99), Some(1));
        assert_eq!(m.next_server(0, 1, 1, 0.0), None);
        assert_eq!(m.buffer(1, 1), 3);
        assert!((m.uniformization_rate() - 22.0).abs() < 1e-12);
    }

    #[test]
    fn invalid_scenarios_rejected() {
        let mut s = rs();
        s.mean_service[0].pop();
        assert!(s.validate().is_err());
        let mut s = rs();
        s.routes[1].clear();
        assert!(s.validate().is_err());
    }
}
