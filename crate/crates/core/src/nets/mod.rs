//! Drift and potential networks, plus the Adam optimizer.

mod adam;
mod checkpoint;
mod mlp;
mod models;

pub use adam::{clip_grad_norm, AdamConfig, AdamState};
pub use checkpoint::{Checkpoint, CHECKPOINT_FORMAT, CHECKPOINT_VERSION};
pub use mlp::{Activation, BoundMlp, Layer, MlpParams};
pub use models::{BoundDrift, BoundPotential, DriftModel, Parametrization, PotentialModel};
