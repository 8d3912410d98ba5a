//! Open multiclass Markovian queueing networks: traffic equations,
//! Lyapunov drift, single-rate reduction, uniformized simulation with
//! couplings, and exact truncated kernels for small networks.

pub mod cli;
pub mod error;
pub mod exactkernel;
pub mod gallery;
pub mod linalg;
pub mod lyapunov;
pub mod model;
pub mod reduction;
pub mod simulate;
pub mod stability;

pub use error::{Error, Result};
pub use model::{NetworkSpec, TrafficSolution};
