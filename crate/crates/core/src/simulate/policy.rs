//! Work-conserving service disciplines.

use serde::{Deserialize, Serialize};

/// Static priority ranking over buffers (classes for probabilistic
/// networks, `(type, leg)` buffers for routed scenarios). Earlier entries are
/// served first; buffers not listed rank after all listed ones, by index.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum PriorityOrder {
    /// One ranking shared by every server.
    Global(Vec<usize>),
    /// One ranking per server.
    PerServer(Vec<Vec<usize>>),
}

impl PriorityOrder {
    pub fn ranking(&self, server: usize) -> &[usize] {
        match self {
            PriorityOrder::Global(order) => order,
            PriorityOrder::PerServer(orders) => orders.get(server).map_or(&[], |o| o),
        }
    }

    /// Buffers in service order for `server`.
    pub fn service_order(&self, server: usize, num_buffers: usize) -> Vec<usize> {
        let mut order: Vec<usize> = Vec::with_capacity(num_buffers);
        for &b in self.ranking(server) {
            if b < num_buffers && !order.contains(&b) {
                order.push(b);
            }
        }
        for b in 0..num_buffers {
            if !order.contains(&b) {
                order.push(b);
            }
        }
        order
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PolicyKind {
    /// Earliest arrival at the server is served.
    Fifo,
    /// Preemptive-resume: the latest arrival is served.
    Lifo,
    /// Preemptive-resume static priority; FIFO within a buffer.
    StaticPriority(PriorityOrder),
    /// A customer chosen uniformly at random is served to completion.
    RandomOrder,
}

impl PolicyKind {
    pub fn name(&self) -> &'static str {
        match self {
            PolicyKind::Fifo => "fifo",
            PolicyKind::Lifo => "lifo",
            PolicyKind::StaticPriority(_) => "priority",
            PolicyKind::RandomOrder => "random",
        }
    }

    /// Parses the CLI spelling. `priority` ranks buffers by index unless an
    /// explicit order is given.
    pub fn parse(name: &str, priority: Option<Vec<usize>>) -> Option<Self> {
        match name.to_ascii_lowercase().as_str() {
            "fifo" => Some(PolicyKind::Fifo),
            "lifo" => Some(PolicyKind::Lifo),
            "random" | "random_order" => Some(PolicyKind::RandomOrder),
            "priority" | "static_priority" => Some(PolicyKind::StaticPriority(
                PriorityOrder::Global(priority.unwrap_or_default()),
            )),
            _ => None,
        }
    }

    /// The four shipped disciplines, priority ranking classes by `order`.
    pub fn all(order: Vec<usize>) -> Vec<PolicyKind> {
        vec![
            PolicyKind::Fifo,
            PolicyKind::Lifo,
            PolicyKind::StaticPriority(PriorityOrder::Global(order)),
            PolicyKind::RandomOrder,
        ]
    }
}
