use std::io::Write;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::simulate::TrajectoryBatch;
use crate::error::Result;

/// Sidecar metadata of a trajectory CSV.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrajectoryMeta {
    pub epsilon: f64,
    pub n_steps: usize,
    pub seed: u64,
    /// hex SHA-256 of the checkpoint file the drift came from
    pub checkpoint_sha256: Option<String>,
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    Sha256::digest(bytes).iter().map(|b| format!("{b:02x}")).collect()
}

/// Writes `sample_id,step,t,x_0,...,x_{D-1}`, one row per sample and step,
/// ordered by sample then step.
pub fn write_trajectory_csv<W: Write>(traj: &TrajectoryBatch, mut w: W) -> Result<()> {
    let (n_steps, b, d) = (traj.n_steps(), traj.batch(), traj.dim());
    let mut header = String::from("sample_id,step,t");
    for k in 0..d {
        header.push_str(&format!(",x_{k}"));
    }
    writeln!(w, "{header}")?;
    let states = traj.states.data();
    for i in 0..b {
        for n in 0..=n_steps {
            let row = &states[(n * b + i) * d..(n * b + i + 1) * d];
            let mut line = format!("{i},{n},{}", traj.time(n));
            for v in row {
                line.push(',');
                line.push_str(&v.to_string());
            }
            writeln!(w, "{line}")?;
        }
    }
    Ok(())
}
