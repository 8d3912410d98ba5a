//! Ordered per-server queues.
//!
//! Each server keeps one FIFO deque per buffer (class, or `(type, leg)` for
//! routed scenarios). A per-server sequence number records arrival order, so
//! the full arrival-ordered queue can always be reconstructed by merging the
//! deques.

use std::collections::VecDeque;

use serde::{Deserialize, Serialize};

use super::policy::PolicyKind;
use super::scenario::NetworkModel;
use super::streams::RandomStreams;
use crate::error::{Error, Result};
use crate::lyapunov::CountVector;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Customer {
    pub id: u64,
    pub class: usize,
    /// Epoch at which the customer joined its current server.
    pub arrival_epoch: u64,
    /// Position on a fixed route; always 0 under probabilistic routing.
    pub leg: usize,
    seq: u64,
}

#[derive(Debug, Clone, Default)]
pub struct ServerQueue {
    buffers: Vec<VecDeque<Customer>>,
    len: usize,
    /// Customer held in service by non-preemptive disciplines.
    current: Option<(usize, u64)>,
    next_seq: u64,
    /// Buffer service order for static priority.
    priority: Vec<usize>,
}

impl ServerQueue {
    fn new(num_buffers: usize, priority: Vec<usize>) -> Self {
        Self {
            buffers: vec![VecDeque::new(); num_buffers],
            priority,
            ..Default::default()
        }
    }

    pub fn len(&self) -> usize {
        self.len
    }

    pub fn is_empty(&self) -> bool {
        self.len == 0
    }

    /// Customers in arrival order.
    pub fn ordered(&self) -> Vec<&Customer> {
        let mut all: Vec<&Customer> = self.buffers.iter().flatten().collect();
        all.sort_by_key(|c| c.seq);
        all
    }

    fn push(&mut self, buffer: usize, mut customer: Customer) {
        customer.seq = self.next_seq;
        self.next_seq += 1;
        self.buffers[buffer].push_back(customer);
        self.len += 1;
    }

    fn position(&self, buffer: usize, seq: u64) -> Option<usize> {
        self.buffers[buffer].binary_search_by_key(&seq, |c| c.seq).ok()
    }

    /// `(buffer, index)` of the customer in service, `None` iff empty.
    fn in_service(&self, policy: &PolicyKind) -> Option<(usize, usize)> {
        if self.len == 0 {
            return None;
        }
        let fronts = || {
            self.buffers
                .iter()
                .enumerate()
                .filter_map(|(b, d)| d.front().map(|c| (b, c.seq)))
        };
        match policy {
            PolicyKind::Fifo => fronts().min_by_key(|&(_, s)| s).map(|(b, _)| (b, 0)),
            PolicyKind::Lifo => self
                .buffers
                .iter()
                .enumerate()
                .filter_map(|(b, d)| d.back().map(|c| (b, c.seq, d.len() - 1)))
                .max_by_key(|&(_, s, _)| s)
                .map(|(b, _, i)| (b, i)),
            PolicyKind::StaticPriority(_) => self
                .priority
                .iter()
                .find(|&&b| !self.buffers[b].is_empty())
                .map(|&b| (b, 0)),
            PolicyKind::RandomOrder => {
                let (b, seq) = self.current?;
                self.position(b, seq).map(|i| (b, i))
            }
        }
    }

    /// Picks a new customer for random-order service when the server has
    /// work but nobody in service.
    fn refresh(&mut self, policy: &PolicyKind, streams: &mut RandomStreams) {
        if *policy != PolicyKind::RandomOrder {
            return;
        }
        if self.len == 0 {
            self.current = None;
            return;
        }
        if self.current.is_some() {
            return;
        }
        let mut pick = streams.policy_index(self.len);
        for (b, d) in self.buffers.iter().enumerate() {
            if pick < d.len() {
                self.current = Some((b, d[pick].seq));
                return;
            }
            pick -= d.len();
        }
    }

    fn remove(&mut self, buffer: usize, index: usize) -> Customer {
        let c = self.buffers[buffer].remove(index).expect("index in range");
        self.len -= 1;
        if self.current == Some((buffer, c.seq)) {
            self.current = None;
        }
        c
    }
}

#[derive(Debug, Clone)]
pub struct NetworkState {
    servers: Vec<ServerQueue>,
    /// `counts[class][server]`
    counts: Vec<Vec<u32>>,
    total: u64,
    epoch: u64,
    next_id: u64,
}

impl NetworkState {
    pub fn empty(model: &NetworkModel, policy: &PolicyKind) -> Self {
        let j = model.num_servers();
        let nb = model.num_buffers();
        let servers = (0..j)
            .map(|s| {
                let prio = match policy {
                    PolicyKind::StaticPriority(order) => order.service_order(s, nb),
                    _ => Vec::new(),
                };
                ServerQueue::new(nb, prio)
            })
            .collect();
        Self {
            servers,
            counts: vec![vec![0; j]; model.num_classes()],
            total: 0,
            epoch: 0,
            next_id: 0,
        }
    }

    /// State holding `x[class][server]` customers, placed class by class.
    pub fn from_counts(
        model: &NetworkModel,
        policy: &PolicyKind,
        x: &CountVector,
        streams: &mut RandomStreams,
    ) -> Result<Self> {
        let mut state = Self::empty(model, policy);
        if x.num_classes() != model.num_classes() || x.num_servers() != model.num_servers() {
            return Err(Error::DimensionMismatch {
                expected: format!("{}x{} counts", model.num_classes(), model.num_servers()),
                got: format!("{}x{}", x.num_classes(), x.num_servers()),
            });
        }
        for c in 0..x.num_classes() {
            for s in 0..x.num_servers() {
                let n = x.get(c, s);
                if n == 0 {
                    continue;
                }
                let leg = model.entry_leg(c, s).ok_or_else(|| {
                    Error::InvalidArgument(format!("class {c} never visits server {s}"))
                })?;
                for _ in 0..n {
                    state.admit(model, c, s, leg);
                }
            }
        }
        for q in &mut state.servers {
            q.refresh(policy, streams);
        }
        Ok(state)
    }

    fn admit(&mut self, model: &NetworkModel, class: usize, server: usize, leg: usize) {
        let c = Customer { id: self.next_id, class, arrival_epoch: self.epoch, leg, seq: 0 };
        self.next_id += 1;
        self.enqueue(model, server, c);
    }

    fn enqueue(&mut self, model: &NetworkModel, server: usize, mut c: Customer) {
        c.arrival_epoch = self.epoch;
        self.counts[c.class][server] += 1;
        self.total += 1;
        let b = model.buffer(c.class, c.leg);
        self.servers[server].push(b, c);
    }

    pub fn arrive(
        &mut self,
        model: &NetworkModel,
        policy: &PolicyKind,
        streams: &mut RandomStreams,
        class: usize,
        server: usize,
        leg: usize,
    ) {
        self.admit(model, class, server, leg);
        self.servers[server].refresh(policy, streams);
    }

    /// Customer in service at `server` under `policy`.
    pub fn in_service(&self, server: usize, policy: &PolicyKind) -> Option<&Customer> {
        let q = &self.servers[server];
        q.in_service(policy).map(|(b, i)| &q.buffers[b][i])
    }

    /// Removes the in-service customer of a busy server.
    pub fn depart(&mut self, server: usize, policy: &PolicyKind) -> Customer {
        let q = &mut self.servers[server];
        let (b, i) = q.in_service(policy).expect("departure from a busy server");
        let c = q.remove(b, i);
        self.counts[c.class][server] -= 1;
        self.total -= 1;
        c
    }

    pub fn route_to(
        &mut self,
        model: &NetworkModel,
        policy: &PolicyKind,
        streams: &mut RandomStreams,
        server: usize,
        c: Customer,
    ) {
        self.enqueue(model, server, c);
        self.servers[server].refresh(policy, streams);
    }

    pub fn settle(&mut self, server: usize, policy: &PolicyKind, streams: &mut RandomStreams) {
        self.servers[server].refresh(policy, streams);
    }

    pub fn advance_epoch(&mut self) {
        self.epoch += 1;
    }

    pub fn epoch(&self) -> u64 {
        self.epoch
    }

    pub fn total(&self) -> u64 {
        self.total
    }

    pub fn queue_len(&self, server: usize) -> usize {
        self.servers[server].len()
    }

    pub fn queue_lengths(&self) -> Vec<u64> {
        self.servers.iter().map(|q| q.len() as u64).collect()
    }

    pub fn server(&self, server: usize) -> &ServerQueue {
        &self.servers[server]
    }

    pub fn counts(&self) -> &Vec<Vec<u32>> {
        &self.counts
    }

    pub fn count_vector(&self) -> CountVector {
        CountVector::new(self.counts.clone()).expect("rectangular")
    }

    /// Every nonempty server has a customer in service.
    pub fn is_work_conserving(&self, policy: &PolicyKind) -> bool {
        self.servers.iter().all(|q| q.is_empty() || q.in_service(policy).is_some())
    }

    /// Work conservation, count/sequence agreement and per-server ordering.
    pub fn check_invariants(&self, policy: &PolicyKind) -> std::result::Result<(), String> {
        let mut total = 0u64;
        for (s, q) in self.servers.iter().enumerate() {
            if !q.is_empty() && q.in_service(policy).is_none() {
                return Err(format!("server {s} is nonempty but idle"));
            }
            let ordered = q.ordered();
            if ordered.len() != q.len() {
                return Err(format!("server {s} length bookkeeping off"));
            }
            if ordered.windows(2).any(|w| w[0].arrival_epoch > w[1].arrival_epoch) {
                return Err(format!("server {s} order disagrees with arrival epochs"));
            }
            for c in 0..self.counts.len() {
                let tally = ordered.iter().filter(|cu| cu.class == c).count() as u32;
                if tally != self.counts[c][s] {
                    return Err(format!("count x[{c}][{s}] = {} but tally {tally}", self.counts[c][s]));
                }
            }
            total += q.len() as u64;
        }
        if total != self.total {
            return Err("total count disagrees with queues".into());
        }
        Ok(())
    }
}
