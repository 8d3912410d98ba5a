use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("singular linear system: pivot {pivot:.3e} below threshold (network effectively closed)")]
    SingularSystem { pivot: f64 },

    #[error("invalid network: {0}")]
    InvalidSpec(String),

    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: String, got: String },

    #[error("network does not have a single common service rate")]
    NotSingleRate,

    #[error("exact kernel requires a single-class network, got {0} classes")]
    NotSingleClass(usize),

    #[error("reduction infeasible: {0}")]
    Infeasible(String),

    #[error("bad slack: rho + eta = {value} >= 1 at class {class}, server {server}")]
    BadSlack { class: usize, server: usize, value: f64 },

    #[error("coupling broken at epoch {epoch}: {detail}")]
    CouplingBroken { epoch: u64, detail: String },

    #[error("state space too large: {states} states exceeds bound {limit}")]
    StateSpaceTooLarge { states: usize, limit: usize },

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
