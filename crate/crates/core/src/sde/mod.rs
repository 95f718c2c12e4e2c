//! Euler-Maruyama simulation of `dX = f(X, t) dt + sqrt(epsilon) dW` and the
//! drift-energy estimators.
//!
//! Two paths share one stepping rule: [`euler_maruyama`] works on plain
//! tensors, [`euler_maruyama_tracked`] records every step in a
//! [`Graph`](crate::autodiff::Graph). Given the same inputs and noise they
//! produce bitwise identical states.

mod config;
mod energy;
mod export;
mod simulate;

pub use config::{BoundPrior, PriorDrift, SdeConfig, TrackedField, VectorField};
pub use energy::{
    energy_estimate, energy_estimate_tracked, relative_energy_estimate, relative_energy_estimate_tracked,
};
pub use export::{sha256_hex, write_trajectory_csv, TrajectoryMeta};
pub use simulate::{euler_maruyama, euler_maruyama_tracked, simulate_states, TrackedTrajectory, TrajectoryBatch};
