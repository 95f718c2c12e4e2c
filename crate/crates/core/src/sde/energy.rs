//! Drift-energy estimators standing in for `KL(T_f || W^eps)`.
//!
//! Both return `(1/N) sum_n mean_b ||f_{n,b} - v_{n,b}||^2` with no
//! `1/(2 epsilon)` factor; the plain and tracked versions perform the same
//! floating-point operations in the same order and agree bit for bit.

use super::config::{PriorDrift, VectorField};
use super::simulate::{TrackedTrajectory, TrajectoryBatch};
use crate::autodiff::{Graph, Var};
use crate::error::{Error, Result};

pub fn energy_estimate(traj: &TrajectoryBatch) -> Result<f64> {
    relative_energy_estimate(traj, &PriorDrift::Zero)
}

pub fn relative_energy_estimate(traj: &TrajectoryBatch, prior: &PriorDrift) -> Result<f64> {
    let (n_steps, b) = (traj.n_steps(), traj.batch());
    if b == 0 || n_steps == 0 {
        return Err(Error::Empty("energy_estimate: trajectory"));
    }
    let dt = 1.0 / n_steps as f64;
    let mut total = 0.0;
    for n in 0..n_steps {
        let f = traj.drift(n);
        let step_sum = if prior.is_zero() {
            f.data().iter().map(|v| v * v).sum::<f64>()
        } else {
            let v = prior.eval_field(&traj.state(n), traj.time(n), dt)?;
            if v.shape() != f.shape() {
                return Err(Error::shape("relative_energy_estimate", v.shape(), f.shape()));
            }
            f.data().iter().zip(v.data()).map(|(a, c)| (a - c) * (a - c)).sum::<f64>()
        };
        total += step_sum;
    }
    Ok(total * (1.0 / (n_steps * b) as f64))
}

pub fn energy_estimate_tracked(g: &mut Graph, traj: &TrackedTrajectory) -> Result<Var> {
    relative_energy_estimate_tracked(g, traj, &PriorDrift::Zero)
}

/// Differentiable energy; the prior is inserted as constants.
pub fn relative_energy_estimate_tracked(
    g: &mut Graph,
    traj: &TrackedTrajectory,
    prior: &PriorDrift,
) -> Result<Var> {
    let n_steps = traj.drifts.len();
    if n_steps == 0 {
        return Err(Error::Empty("energy_estimate: trajectory"));
    }
    let b = g.shape(traj.drifts[0])[0];
    if b == 0 {
        return Err(Error::Empty("energy_estimate: batch"));
    }
    let dt = 1.0 / n_steps as f64;
    let bound = prior.bind(g);
    let mut total: Option<Var> = None;
    for (n, &f) in traj.drifts.iter().enumerate() {
        let diff = match bound.eval(g, traj.states[n], n as f64 / n_steps as f64, dt)? {
            None => f,
            Some(v) => g.sub(f, v)?,
        };
        let sq = g.square(diff)?;
        let step_sum = g.sum_all(sq)?;
        total = Some(match total {
            None => step_sum,
            Some(acc) => g.add(acc, step_sum)?,
        });
    }
    g.scale(total.expect("at least one step"), 1.0 / (n_steps * b) as f64)
}
