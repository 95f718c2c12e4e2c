//! The alternating potential/drift training loop.
//!
//! Each outer iteration makes one potential step on a fresh `(X_0, Y)` pair,
//! with `X_N` simulated without gradients. It then makes `inner_steps` drift
//! steps, each on a fresh `X_0` with a fresh tracked simulation. Every
//! simulation gets its own noise stream.

mod config;
mod eval;
mod history;
mod losses;

use std::collections::BTreeMap;

pub use config::TrainConfig;
pub use eval::{evaluate_gaussian, evaluate_toy, functional_eval, GaussianEvalReport, ToyEvalReport};
pub use history::{IterRecord, TrainHistory};
pub use losses::{loss_beta, loss_beta_value, loss_f, loss_f_value};

use crate::autodiff::Graph;
use crate::datagen::Sampler;
use crate::error::{Error, Result};
use crate::nets::{clip_grad_norm, AdamConfig, AdamState, DriftModel, PotentialModel};
use crate::rng::{derive_seed, seeded_rng, NoiseStream};
use crate::sde::{euler_maruyama_tracked, simulate_states};

/// Hooks called by [`train_enot`].
pub trait TrainObserver {
    /// Called every `eval_every` iterations and after the last one; the
    /// returned metrics are stored on that iteration's record.
    fn evaluate(&mut self, _iter: u64, _drift: &DriftModel, _potential: &PotentialModel) -> Result<BTreeMap<String, f64>> {
        Ok(BTreeMap::new())
    }

    /// Called after every iteration.
    fn record(&mut self, _record: &IterRecord) -> Result<()> {
        Ok(())
    }
}

/// Observer that does nothing.
pub struct NoObserver;

impl TrainObserver for NoObserver {}

#[derive(Clone, Debug, PartialEq)]
pub enum TrainStatus {
    Completed,
    /// a loss or state became non-finite; models are those of the last good
    /// iteration
    Diverged { iter: u64, message: String },
}

#[derive(Clone, Debug)]
pub struct TrainOutcome {
    pub drift: DriftModel,
    pub potential: PotentialModel,
    pub history: TrainHistory,
    pub status: TrainStatus,
}

/// Seed of the noise streams of a run.
pub fn noise_seed(seed: u64) -> u64 {
    derive_seed(seed, 2)
}

/// Freshly initialized models for `cfg` and state dimension `dim`.
pub fn init_models(cfg: &TrainConfig, dim: usize) -> Result<(DriftModel, PotentialModel)> {
    let mut rng = seeded_rng(derive_seed(cfg.seed, 1));
    let drift = DriftModel::new(dim, &cfg.hidden_f, cfg.parametrization, &mut rng)?;
    let potential = PotentialModel::new(dim, &cfg.hidden_beta, &mut rng)?;
    Ok((drift, potential))
}

pub fn train_enot(
    p0: &mut dyn Sampler,
    p1: &mut dyn Sampler,
    cfg: &TrainConfig,
    observer: &mut dyn TrainObserver,
) -> Result<TrainOutcome> {
    cfg.validate()?;
    if p0.dim() != p1.dim() {
        return Err(Error::config(format!("source dimension {} differs from target dimension {}", p0.dim(), p1.dim())));
    }
    let (drift, potential) = init_models(cfg, p0.dim())?;
    train_from(p0, p1, cfg, drift, potential, observer)
}

/// Continues training from given models.
pub fn train_from(
    p0: &mut dyn Sampler,
    p1: &mut dyn Sampler,
    cfg: &TrainConfig,
    mut drift: DriftModel,
    mut potential: PotentialModel,
    observer: &mut dyn TrainObserver,
) -> Result<TrainOutcome> {
    cfg.validate()?;
    if drift.dim() != p0.dim() || potential.dim() != p1.dim() {
        return Err(Error::config("model dimensions do not match the samplers"));
    }
    let sde = cfg.sde();
    let noise_seed = noise_seed(cfg.seed);
    let mut adam_f = AdamState::new(AdamConfig::with_lr(cfg.lr_f));
    let mut adam_beta = AdamState::new(AdamConfig::with_lr(cfg.lr_beta));
    let mut history = TrainHistory::default();
    let mut stream = 0u64;
    let b = cfg.batch_size;

    for iter in 1..=cfg.total_outer_iters as u64 {
        let snapshot = (drift.clone(), potential.clone());
        let step = (|| -> Result<IterRecord> {
            // potential step
            let x0 = p0.sample(b)?;
            let y = p1.sample(b)?;
            let ns = NoiseStream::new(noise_seed, stream);
            stream += 1;
            let xn = simulate_states(&x0, &drift, &sde, ns, &[sde.n_steps], b)?.remove(0);
            let draws_beta = if sde.epsilon > 0.0 {
                let noisy = (0..sde.n_steps).filter(|&n| sde.step_has_noise(n)).count();
                (noisy * b * p0.dim()) as u64
            } else {
                0
            };
            let mut g = graph(cfg);
            let bound_beta = potential.bind(&mut g, true);
            let (xv, yv) = (g.constant(xn), g.constant(y));
            let lb = loss_beta(&mut g, xv, yv, &bound_beta)?;
            let loss_beta_v = finite(g.value(lb).item()?, "loss_beta")?;
            g.backward(lb)?;
            let mut grads = bound_beta.mlp.grads(&g);
            clip(cfg, &mut grads);
            adam_beta.step(&mut potential.mlp.params_mut(), &grads)?;

            // drift steps
            let mut draws_f = 0;
            let (mut loss_f_v, mut energy_v) = (0.0, 0.0);
            for _ in 0..cfg.inner_steps {
                let x0 = p0.sample(b)?;
                let ns = NoiseStream::new(noise_seed, stream);
                stream += 1;
                let mut g = graph(cfg);
                let bound_f = drift.bind(&mut g, true);
                let bound_beta = potential.bind(&mut g, false);
                let traj = euler_maruyama_tracked(&mut g, &x0, &bound_f, &sde, ns)?;
                draws_f += traj.rng_draws;
                let (lf, energy) = loss_f(&mut g, &traj, &bound_beta, &sde.prior)?;
                loss_f_v = finite(g.value(lf).item()?, "loss_f")?;
                energy_v = g.value(energy).item()?;
                g.backward(lf)?;
                let mut grads = bound_f.mlp.grads(&g);
                clip(cfg, &mut grads);
                adam_f.step(&mut drift.mlp.params_mut(), &grads)?;
            }
            if !(drift.mlp.is_finite() && potential.mlp.is_finite()) {
                return Err(Error::NonFinite {
                    op: "adam_step",
                    context: Some("parameters".into()),
                });
            }
            Ok(IterRecord {
                iter,
                loss_beta: loss_beta_v,
                loss_f: loss_f_v,
                energy: energy_v,
                rng_draws_beta: draws_beta,
                rng_draws_f: draws_f,
                simulations: stream,
                eval: BTreeMap::new(),
            })
        })();

        let mut record = match step {
            Ok(r) => r,
            Err(e @ Error::NonFinite { .. }) => {
                return Ok(TrainOutcome {
                    drift: snapshot.0,
                    potential: snapshot.1,
                    history,
                    status: TrainStatus::Diverged {
                        iter,
                        message: e.to_string(),
                    },
                })
            }
            Err(e) => return Err(e),
        };
        let last = iter == cfg.total_outer_iters as u64;
        if (cfg.eval_every > 0 && iter % cfg.eval_every as u64 == 0) || last {
            record.eval = observer.evaluate(iter, &drift, &potential)?;
        }
        observer.record(&record)?;
        history.push(record);
    }
    Ok(TrainOutcome {
        drift,
        potential,
        history,
        status: TrainStatus::Completed,
    })
}

fn graph(cfg: &TrainConfig) -> Graph {
    let mut g = Graph::new();
    g.set_strict(cfg.strict_finite);
    g
}

fn finite(v: f64, op: &'static str) -> Result<f64> {
    if v.is_finite() {
        Ok(v)
    } else {
        Err(Error::NonFinite { op, context: None })
    }
}

fn clip(cfg: &TrainConfig, grads: &mut [crate::autodiff::Tensor]) {
    if let Some(c) = cfg.grad_clip {
        clip_grad_norm(grads, c);
    }
}
