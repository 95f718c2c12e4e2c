use serde::{Deserialize, Serialize};

use crate::autodiff::Tensor;
use crate::datagen::Sampler;
use crate::error::{Error, Result};
use crate::gaussian_oracle::GaussianEotPlan;
use crate::metrics::{bw2_uvp_samples, energy_distance};
use crate::nets::{DriftModel, PotentialModel};
use crate::rng::NoiseStream;
use crate::sde::{relative_energy_estimate, simulate_states, SdeConfig, VectorField};

/// Monte-Carlo estimate of `scale * energy + mean beta(Y) - mean beta(X_N)`
/// with `X_N` simulated from the rows of `x0` (one sample each).
///
/// Uses the energy relative to `cfg.prior`. With shared inputs and noise,
/// `functional_eval(c beta, scale = c) = c * functional_eval(beta, scale = 1)`.
pub fn functional_eval(
    beta: &PotentialModel,
    drift: &DriftModel,
    cfg: &SdeConfig,
    scale: f64,
    x0: &Tensor,
    y: &Tensor,
    noise: NoiseStream,
) -> Result<f64> {
    if !(scale > 0.0 && scale.is_finite()) {
        return Err(Error::config(format!("scale must be positive, got {scale}")));
    }
    if x0.rows() == 0 || y.rows() == 0 {
        return Err(Error::Empty("functional_eval: n_mc"));
    }
    let traj = crate::sde::euler_maruyama(x0, drift, cfg, noise)?;
    let energy = relative_energy_estimate(&traj, &cfg.prior)?;
    let bx = beta.eval(&traj.final_state())?;
    let by = beta.eval(y)?;
    let mean = |t: &Tensor| t.data().iter().sum::<f64>() / t.numel() as f64;
    Ok(scale * energy + mean(&by) - mean(&bx))
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GaussianEvalReport {
    pub n_samples: usize,
    /// UVP of `X_N` against the target marginal
    pub target_uvp: f64,
    /// UVP of `(X_0, X_N)` against the plan on `R^{2D}`
    pub plan_uvp: f64,
    /// `(t, UVP of X_t against the bridge marginal)`
    pub marginal_uvp: Vec<(f64, f64)>,
}

/// Simulates `n` trajectories from `x0 ~ p0` and compares them with the
/// closed-form plan. Every `t` in `t_grid` must fall on a step.
pub fn evaluate_gaussian(
    field: &dyn VectorField,
    cfg: &SdeConfig,
    plan: &GaussianEotPlan,
    p0: &mut dyn Sampler,
    n: usize,
    t_grid: &[f64],
    noise: NoiseStream,
) -> Result<GaussianEvalReport> {
    let steps = t_grid
        .iter()
        .map(|&t| {
            let s = t * cfg.n_steps as f64;
            if !(0.0..=1.0).contains(&t) || (s - s.round()).abs() > 1e-9 {
                return Err(Error::config(format!("t = {t} is not a multiple of 1/{}", cfg.n_steps)));
            }
            Ok(s.round() as usize)
        })
        .collect::<Result<Vec<_>>>()?;
    let mut wanted = steps.clone();
    wanted.push(cfg.n_steps);
    let x0 = p0.sample(n)?;
    let states = simulate_states(&x0, field, cfg, noise, &wanted, 10_000)?;
    let xn = states.last().expect("final state requested");
    let target_uvp = bw2_uvp_samples(xn, &plan.p1)?;
    let plan_uvp = bw2_uvp_samples(&x0.hcat(xn)?, &plan.joint()?)?;
    let marginal_uvp = t_grid
        .iter()
        .zip(&states)
        .map(|(&t, x)| Ok((t, bw2_uvp_samples(x, &plan.bridge_marginal(t)?)?)))
        .collect::<Result<_>>()?;
    Ok(GaussianEvalReport {
        n_samples: n,
        target_uvp,
        plan_uvp,
        marginal_uvp,
    })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ToyEvalReport {
    pub n_samples: usize,
    /// energy distance between generated `X_N` and target samples
    pub model: f64,
    /// same for the identity map `X_N = X_0`
    pub identity: f64,
}

/// Energy distances of the model and of the identity map to `n` target samples.
pub fn evaluate_toy(
    field: &dyn VectorField,
    cfg: &SdeConfig,
    p0: &mut dyn Sampler,
    p1: &mut dyn Sampler,
    n: usize,
    noise: NoiseStream,
) -> Result<(ToyEvalReport, Tensor, Tensor)> {
    let x0 = p0.sample(n)?;
    let y = p1.sample(n)?;
    let xn = simulate_states(&x0, field, cfg, noise, &[cfg.n_steps], 10_000)?.remove(0);
    let report = ToyEvalReport {
        n_samples: n,
        model: energy_distance(&xn, &y)?,
        identity: energy_distance(&x0, &y)?,
    };
    Ok((report, x0, xn))
}
