//! Entropic optimal transport via SDE drift/potential games.

// `!(x > 0.0)` is used on purpose so that NaN fails the check.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod autodiff;
pub mod datagen;
pub mod discrete_oracle;
mod error;
pub mod gaussian_oracle;
pub mod metrics;
pub mod nets;
pub mod rng;
pub mod sde;
pub mod training;

pub use error::{Error, Result};
