use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{DriftModel, MlpParams, PotentialModel};
use crate::error::{Error, Result};

pub const CHECKPOINT_FORMAT: &str = "enot-checkpoint";
pub const CHECKPOINT_VERSION: u32 = 1;

/// Versioned JSON snapshot of a drift/potential pair.
///
/// Tensors are stored as `{shape, data}` with row-major data. Floats are
/// written in shortest round-trip form, so save/load is bit-exact.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Checkpoint {
    pub format: String,
    pub version: u32,
    pub iteration: u64,
    pub drift: DriftModel,
    pub potential: PotentialModel,
    /// verbatim echo of the configuration that produced the models
    #[serde(default)]
    pub config: serde_json::Value,
}

impl Checkpoint {
    pub fn new(iteration: u64, drift: DriftModel, potential: PotentialModel, config: serde_json::Value) -> Self {
        Self {
            format: CHECKPOINT_FORMAT.to_string(),
            version: CHECKPOINT_VERSION,
            iteration,
            drift,
            potential,
            config,
        }
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string(self)?)
    }

    pub fn from_json(s: &str) -> Result<Self> {
        let ckpt: Checkpoint = serde_json::from_str(s)?;
        if ckpt.format != CHECKPOINT_FORMAT {
            return Err(Error::Format(format!("not a checkpoint: format = {:?}", ckpt.format)));
        }
        if ckpt.version != CHECKPOINT_VERSION {
            return Err(Error::Format(format!(
                "checkpoint version {} is not supported (expected {CHECKPOINT_VERSION})",
                ckpt.version
            )));
        }
        // re-validate layer chaining, which serde does not check
        let drift_mlp = revalidate(&ckpt.drift.mlp)?;
        DriftModel::from_mlp(drift_mlp, ckpt.drift.mode)?;
        PotentialModel::from_mlp(revalidate(&ckpt.potential.mlp)?)?;
        if ckpt.drift.dim() != ckpt.potential.dim() {
            return Err(Error::Format(format!(
                "drift dimension {} does not match potential dimension {}",
                ckpt.drift.dim(),
                ckpt.potential.dim()
            )));
        }
        Ok(ckpt)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        std::fs::write(path, self.to_json()?)?;
        Ok(())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        Self::from_json(&std::fs::read_to_string(path)?)
    }
}

fn revalidate(mlp: &MlpParams) -> Result<MlpParams> {
    MlpParams::from_layers(mlp.layers().to_vec(), mlp.activations().to_vec())
}
