use crate::autodiff::{Graph, Tensor, Var};
use crate::error::{Error, Result};
use crate::nets::{BoundPotential, PotentialModel};
use crate::sde::{
    relative_energy_estimate, relative_energy_estimate_tracked, PriorDrift, TrackedTrajectory, TrajectoryBatch,
};

/// `mean beta(X_N) - mean beta(Y)`. The potential step minimizes this value,
/// which maximizes the Lagrangian `energy + E_P1 beta - E_{X_N} beta`.
pub fn loss_beta(g: &mut Graph, xn: Var, y: Var, potential: &BoundPotential) -> Result<Var> {
    if g.shape(xn)[0] == 0 || g.shape(y)[0] == 0 {
        return Err(Error::Empty("loss_beta: batch"));
    }
    let bx = potential.eval(g, xn)?;
    let by = potential.eval(g, y)?;
    let mx = g.mean_all(bx)?;
    let my = g.mean_all(by)?;
    g.sub(mx, my)
}

pub fn loss_beta_value(xn: &Tensor, y: &Tensor, potential: &PotentialModel) -> Result<f64> {
    let mut g = Graph::new();
    let bound = potential.bind(&mut g, false);
    let (xv, yv) = (g.constant(xn.clone()), g.constant(y.clone()));
    let l = loss_beta(&mut g, xv, yv, &bound)?;
    g.value(l).item()
}

/// `energy - mean beta(X_N)`; returns `(loss, energy)`.
pub fn loss_f(
    g: &mut Graph,
    traj: &TrackedTrajectory,
    potential: &BoundPotential,
    prior: &PriorDrift,
) -> Result<(Var, Var)> {
    let energy = relative_energy_estimate_tracked(g, traj, prior)?;
    let beta = potential.eval(g, traj.final_state())?;
    let mb = g.mean_all(beta)?;
    Ok((g.sub(energy, mb)?, energy))
}

pub fn loss_f_value(traj: &TrajectoryBatch, potential: &PotentialModel, prior: &PriorDrift) -> Result<f64> {
    let energy = relative_energy_estimate(traj, prior)?;
    let beta = potential.eval(&traj.final_state())?;
    Ok(energy - beta.data().iter().sum::<f64>() / beta.numel() as f64)
}
