//! Uniformized discrete-time simulation.
//!
//! Each epoch draws one uniform `u` from the `event` stream and reads it
//! against a fixed layout of `[0, 1)`:
//!
//! ```text
//! [0, p)                      exogenous arrival (class/server from `assign`)
//! [p + j*w, p + j*w + mu/Q)   departure from server j, if busy
//! anything else               self-loop
//! ```
//!
//! with `p = lambda/Q`, slot width `w = max mu / Q` and `mu` the rate of the
//! customer in service. Because slot positions do not depend on the state,
//! two chains sharing the stream and the layout but using smaller departure
//! thresholds have nested departure events, which is what the couplings in
//! [`coupling`] use.

pub mod coupling;
pub mod policy;
pub mod scenario;
pub mod state;
pub mod streams;

use std::fmt::Write as _;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

pub use coupling::{
    coupled_run, coupled_run_unchecked, monotone_coupled_run, monotone_coupled_run_model,
    CouplingOutcome, DominanceReport,
};
pub use policy::{PolicyKind, PriorityOrder};
pub use scenario::{NetworkModel, RoutedScenario};
pub use state::{Customer, NetworkState};
pub use streams::{substream_seed, RandomStreams};

use crate::error::{Error, Result};
use crate::lyapunov::CountVector;
use crate::model::NetworkSpec;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Event {
    Arrival { class: usize, server: usize },
    Move { from: usize, to: usize },
    Exit { from: usize },
    SelfLoop,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum EventTag {
    E1,
    E2,
    E3,
    E4,
}

impl Event {
    pub fn tag(&self) -> EventTag {
        match self {
            Event::Arrival { .. } => EventTag::E1,
            Event::Move { .. } => EventTag::E2,
            Event::Exit { .. } => EventTag::E3,
            Event::SelfLoop => EventTag::E4,
        }
    }
}

impl EventTag {
    pub fn as_str(&self) -> &'static str {
        match self {
            EventTag::E1 => "E1",
            EventTag::E2 => "E2",
            EventTag::E3 => "E3",
            EventTag::E4 => "E4",
        }
    }

    fn index(&self) -> usize {
        *self as usize
    }
}

/// How routing randomness is shared between coupled chains.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum RouteCoupling {
    /// The `k`-th departure from server `j` uses the `k`-th draw of
    /// `route[j]`.
    ByDepartureCount,
    /// One routing draw per epoch, used by whichever departure happens.
    ByEpoch,
}

/// Placement of events on the unit interval.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Layout {
    pub arrival_prob: f64,
    pub slot_width: f64,
    /// Departure threshold per unit service rate (`1/Q`).
    pub rate_scale: f64,
}

impl Layout {
    pub fn for_model(model: &NetworkModel) -> Self {
        let q = model.uniformization_rate();
        Self {
            arrival_prob: model.arrival_rate() / q,
            slot_width: model.max_rate() / q,
            rate_scale: 1.0 / q,
        }
    }

    fn check(&self, model: &NetworkModel) -> Result<()> {
        let j = model.num_servers() as f64;
        let used = self.arrival_prob + j * self.slot_width;
        if used > 1.0 + 1e-12 {
            return Err(Error::InvalidArgument(format!("layout uses {used} > 1 of the unit interval")));
        }
        if model.max_rate() * self.rate_scale > self.slot_width * (1.0 + 1e-12) {
            return Err(Error::InvalidArgument("departure threshold exceeds slot width".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone)]
pub struct Simulation {
    model: Arc<NetworkModel>,
    policy: PolicyKind,
    state: NetworkState,
    streams: RandomStreams,
    layout: Layout,
    routing: RouteCoupling,
}

impl Simulation {
    pub fn new(model: Arc<NetworkModel>, policy: PolicyKind, seed: u64) -> Self {
        let streams = RandomStreams::new(seed, model.num_servers());
        let state = NetworkState::empty(&model, &policy);
        let layout = Layout::for_model(&model);
        Self { model, policy, state, streams, layout, routing: RouteCoupling::ByDepartureCount }
    }

    pub fn with_counts(
        model: Arc<NetworkModel>,
        policy: PolicyKind,
        x: &CountVector,
        seed: u64,
    ) -> Result<Self> {
        let mut sim = Self::new(model, policy, seed);
        sim.state = NetworkState::from_counts(&sim.model, &sim.policy, x, &mut sim.streams)?;
        Ok(sim)
    }

    pub fn set_layout(&mut self, layout: Layout) -> Result<()> {
        layout.check(&self.model)?;
        self.layout = layout;
        Ok(())
    }

    pub fn set_route_coupling(&mut self, routing: RouteCoupling) {
        self.routing = routing;
    }

    pub fn state(&self) -> &NetworkState {
        &self.state
    }

    pub fn model(&self) -> &NetworkModel {
        &self.model
    }

    pub fn policy(&self) -> &PolicyKind {
        &self.policy
    }

    /// One uniformized transition.
    pub fn step(&mut self) -> Event {
        let u = self.streams.event();
        let epoch_route = match self.routing {
            RouteCoupling::ByEpoch => Some(self.streams.route_epoch()),
            RouteCoupling::ByDepartureCount => None,
        };
        let Layout { arrival_prob, slot_width, rate_scale } = self.layout;

        let event = if u < arrival_prob {
            let (class, server, leg) = self.model.sample_arrival(self.streams.assign());
            self.state
                .arrive(&self.model, &self.policy, &mut self.streams, class, server, leg);
            Event::Arrival { class, server }
        } else {
            let rel = u - arrival_prob;
            let slot = (rel / slot_width) as usize;
            let offset = rel - slot as f64 * slot_width;
            let fires = slot < self.model.num_servers()
                && self
                    .state
                    .in_service(slot, &self.policy)
                    .is_some_and(|c| offset < self.model.service_rate(c.class, c.leg, slot) * rate_scale);
            if fires {
                self.depart(slot, epoch_route)
            } else {
                Event::SelfLoop
            }
        };
        self.state.advance_epoch();
        debug_assert!(self.state.is_work_conserving(&self.policy));
        event
    }

    fn depart(&mut self, from: usize, epoch_route: Option<f64>) -> Event {
        let mut c = self.state.depart(from, &self.policy);
        let u = epoch_route.unwrap_or_else(|| self.streams.route(from));
        let next = self.model.next_server(c.class, c.leg, from, u);
        let event = match next {
            Some(to) => {
                if matches!(*self.model, NetworkModel::Routed(_)) {
                    c.leg += 1;
                }
                self.state
                    .route_to(&self.model, &self.policy, &mut self.streams, to, c);
                Event::Move { from, to }
            }
            None => Event::Exit { from },
        };
        self.state.settle(from, &self.policy, &mut self.streams);
        event
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TraceRecord {
    /// Number of completed epochs.
    pub epoch: u64,
    pub event: EventTag,
    pub total: u64,
    /// `x[class][server]` flattened class-major.
    pub counts: Vec<u32>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Trace {
    pub num_classes: usize,
    pub num_servers: usize,
    pub stride: u64,
    pub horizon: u64,
    pub records: Vec<TraceRecord>,
    /// Occurrences of E1..E4 over every epoch, recorded or not.
    pub event_counts: [u64; 4],
}

impl Trace {
    pub fn new(num_classes: usize, num_servers: usize, stride: u64) -> Self {
        Self {
            num_classes,
            num_servers,
            stride: stride.max(1),
            horizon: 0,
            records: Vec::new(),
            event_counts: [0; 4],
        }
    }

    pub(crate) fn observe(&mut self, event: Event, state: &NetworkState) {
        self.horizon += 1;
        self.event_counts[event.tag().index()] += 1;
        if self.horizon % self.stride == 0 {
            self.records.push(TraceRecord {
                epoch: state.epoch(),
                event: event.tag(),
                total: state.total(),
                counts: state.counts().iter().flatten().copied().collect(),
            });
        }
    }

    pub fn totals(&self) -> Vec<u64> {
        self.records.iter().map(|r| r.total).collect()
    }

    pub fn queue_length(&self, record: &TraceRecord, server: usize) -> u64 {
        (0..self.num_classes)
            .map(|c| record.counts[c * self.num_servers + server] as u64)
            .sum()
    }

    pub fn event_fraction(&self, tag: EventTag) -> f64 {
        self.event_counts[tag.index()] as f64 / self.horizon.max(1) as f64
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from("epoch,event,total");
        for c in 0..self.num_classes {
            for s in 0..self.num_servers {
                let _ = write!(out, ",x_{c}_{s}");
            }
        }
        out.push('\n');
        for r in &self.records {
            let _ = write!(out, "{},{},{}", r.epoch, r.event.as_str(), r.total);
            for v in &r.counts {
                let _ = write!(out, ",{v}");
            }
            out.push('\n');
        }
        out
    }
}

/// Runs `sim` for `horizon` epochs, recording every `stride`-th state.
pub fn run_simulation(sim: &mut Simulation, horizon: u64, stride: u64) -> Trace {
    let mut trace = Trace::new(sim.model.num_classes(), sim.model.num_servers(), stride);
    for _ in 0..horizon {
        let e = sim.step();
        trace.observe(e, &sim.state);
    }
    trace
}

/// Simulates a probabilistic network from the empty state.
pub fn run(spec: &NetworkSpec, policy: &PolicyKind, horizon: u64, seed: u64, stride: u64) -> Result<Trace> {
    if horizon == 0 {
        return Err(Error::InvalidArgument("horizon must be at least 1".into()));
    }
    let model = Arc::new(NetworkModel::probabilistic(spec)?);
    let mut sim = Simulation::new(model, policy.clone(), seed);
    Ok(run_simulation(&mut sim, horizon, stride))
}

/// Simulates a fixed-route scenario under its own policy.
pub fn demo_route_run(scenario: &RoutedScenario, horizon: u64, seed: u64, stride: u64) -> Result<Trace> {
    if horizon == 0 {
        return Err(Error::InvalidArgument("horizon must be at least 1".into()));
    }
    let model = Arc::new(NetworkModel::routed(scenario)?);
    let mut sim = Simulation::new(model, scenario.policy.clone(), seed);
    Ok(run_simulation(&mut sim, horizon, stride))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn mm1(lambda: f64, mu: f64) -> NetworkSpec {
        NetworkSpec {
            num_servers: 1,
            num_classes: 1,
            lambda,
            assign_prob: vec![vec![1.0]],
            service_rate: vec![vec![mu]],
            routing: vec![vec![0.0]],
        }
    }

    #[test]
    fn first_arrival_from_empty() {
        let model = Arc::new(NetworkModel::probabilistic(&mm1(1.0, 2.0)).unwrap());
        // Find a seed whose first event draw is an arrival.
        let seed = (0..100)
            .find(|&s| RandomStreams::new(s, 1).event() < 1.0 / 3.0)
            .unwrap();
        let mut sim = Simulation::new(model, PolicyKind::Fifo, seed);
        let e = sim.step();
        assert_eq!(e, Event::Arrival { class: 0, server: 0 });
        assert_eq!(sim.state().counts()[0][0], 1);
    }

    #[test]
    fn lone_customer_exits() {
        let model = Arc::new(NetworkModel::probabilistic(&mm1(1.0, 2.0)).unwrap());
        let x = CountVector::new(vec![vec![1]]).unwrap();
        let seed = (0..100)
            .find(|&s| RandomStreams::new(s, 1).event() >= 1.0 / 3.0)
            .unwrap();
        let mut sim = Simulation::with_counts(model, PolicyKind::Fifo, &x, seed).unwrap();
        assert_eq!(sim.step(), Event::Exit { from: 0 });
        assert_eq!(sim.state().total(), 0);
    }

    #[test]
    fn no_arrivals_means_self_loops() {
        let t = run(&mm1(0.0, 2.0), &PolicyKind::Fifo, 1000, 1, 1).unwrap();
        assert_eq!(t.event_counts, [0, 0, 0, 1000]);
        assert!(t.records.iter().all(|r| r.total == 0));
    }

    #[test]
    fn deterministic_given_seed() {
        let s = mm1(1.0, 2.0);
        let a = run(&s, &PolicyKind::RandomOrder, 5000, 9, 7).unwrap();
        let b = run(&s, &PolicyKind::RandomOrder, 5000, 9, 7).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.records.len(), 5000 / 7);
        let c = run(&s, &PolicyKind::RandomOrder, 5000, 10, 7).unwrap();
        assert_ne!(a, c);
    }

    #[test]
    fn total_moves_by_at_most_one() {
        let s = NetworkSpec {
            num_servers: 2,
            num_classes: 2,
            lambda: 1.0,
            assign_prob: vec![vec![0.5, 0.0], vec![0.2, 0.3]],
            service_rate: vec![vec![2.0, 3.0], vec![4.0, 2.5]],
            routing: vec![vec![0.1, 0.5], vec![0.3, 0.0]],
        };
        for policy in PolicyKind::all(vec![1, 0]) {
            let t = run(&s, &policy, 20_000, 3, 1).unwrap();
            for w in t.records.windows(2) {
                assert!(w[0].total.abs_diff(w[1].total) <= 1);
            }
        }
    }

    #[test]
    fn invariants_hold_every_step() {
        let s = NetworkSpec {
            num_servers: 2,
            num_classes: 2,
            lambda: 1.5,
            assign_prob: vec![vec![0.5, 0.0], vec![0.2, 0.3]],
            service_rate: vec![vec![2.0, 3.0], vec![4.0, 2.5]],
            routing: vec![vec![0.5, 0.3], vec![0.3, 0.0]],
        };
        let model = Arc::new(NetworkModel::probabilistic(&s).unwrap());
        for policy in PolicyKind::all(vec![1, 0]) {
            let mut sim = Simulation::new(model.clone(), policy.clone(), 5);
            for _ in 0..5000 {
                sim.step();
                sim.state().check_invariants(&policy).unwrap();
            }
        }
    }

    #[test]
    fn csv_header_and_rows() {
        let t = run(&mm1(1.0, 2.0), &PolicyKind::Fifo, 10, 1, 5).unwrap();
        let csv = t.to_csv();
        let lines: Vec<&str> = csv.lines().collect();
        assert_eq!(lines[0], "epoch,event,total,x_0_0");
        assert_eq!(lines.len(), 3);
        assert!(lines[1].starts_with("5,E"));
    }

    #[test]
    fn zero_horizon_rejected() {
        assert!(run(&mm1(1.0, 2.0), &PolicyKind::Fifo, 0, 1, 1).is_err());
    }

    #[test]
    fn routed_customers_follow_their_route() {
        let sc = RoutedScenario {
            routes: vec![vec![0, 1]],
            mean_service: vec![vec![0.5, 0.5]],
            arrival_rates: Some(vec![0.5]),
            policy: PolicyKind::Fifo,
        };
        let model = Arc::new(NetworkModel::routed(&sc).unwrap());
        let mut sim = Simulation::new(model, PolicyKind::Fifo, 2);
        for _ in 0..2000 {
            match sim.step() {
                Event::Move { from, to } => assert_eq!((from, to), (0, 1)),
                Event::Exit { from } => assert_eq!(from, 1),
                Event::Arrival { server, .. } => assert_eq!(server, 0),
                Event::SelfLoop => {}
            }
        }
    }
}
