//! `enot eval`: Gaussian metrics of a checkpoint, or of the oracle itself.

use std::collections::BTreeMap;
use std::path::PathBuf;

use enot::datagen::SeededSampler;
use enot::gaussian_oracle::{bridge_marginal_sample, sample_plan, GaussianInstance};
use enot::metrics::{bw2_uvp_samples, config_hash};
use enot::nets::Checkpoint;
use enot::rng::{derive_seed, seeded_rng, NoiseStream};
use enot::training::{evaluate_gaussian, TrainConfig};

use crate::config::{ExperimentConfig, EvalSettings, Task};
use crate::error::{CliError, CliResult};
use crate::run::{export_trajectories, labels, marginal_key, metric_records, write_json, write_metric_csv};

pub struct EvalArgs {
    pub checkpoint: Option<PathBuf>,
    pub instance: PathBuf,
    pub t_grid: Vec<f64>,
    pub n_samples: usize,
    pub seed: u64,
    pub output: PathBuf,
    pub trajectories: usize,
    /// evaluate exact plan samples instead of a checkpoint
    pub self_test: bool,
}

/// Metrics of exact oracle samples; a noise-floor reference.
pub fn oracle_metrics(inst: &GaussianInstance, t_grid: &[f64], n: usize, seed: u64) -> CliResult<BTreeMap<String, f64>> {
    let plan = inst.plan()?;
    let mut rng = seeded_rng(derive_seed(seed, labels::EVAL_P0));
    let (x0, x1) = sample_plan(&plan, n, &mut rng)?;
    let mut out = BTreeMap::new();
    out.insert("plan_uvp".to_string(), bw2_uvp_samples(&x0.hcat(&x1)?, &plan.joint()?)?);
    out.insert("target_uvp".to_string(), bw2_uvp_samples(&x1, &plan.p1)?);
    for &t in t_grid {
        let xt = bridge_marginal_sample(&plan, t, n, &mut rng)?;
        out.insert(marginal_key(t), bw2_uvp_samples(&xt, &plan.bridge_marginal(t)?)?);
    }
    Ok(out)
}

pub fn cmd_eval(a: &EvalArgs) -> CliResult<BTreeMap<String, f64>> {
    let inst = GaussianInstance::load(&a.instance)
        .map_err(|e| CliError::usage(format!("cannot load instance {}: {e}", a.instance.display())))?;
    if a.n_samples < 2 {
        return Err(CliError::usage("--n-samples must be at least 2"));
    }
    std::fs::create_dir_all(&a.output)?;
    let (metrics, hash) = if a.self_test {
        let hash = config_hash(&serde_json::to_value(&inst)?);
        (oracle_metrics(&inst, &a.t_grid, a.n_samples, a.seed)?, hash)
    } else {
        let path = a
            .checkpoint
            .as_ref()
            .ok_or_else(|| CliError::usage("eval needs --checkpoint unless --self-test is given"))?;
        let ckpt = Checkpoint::load(path)
            .map_err(|e| CliError::usage(format!("cannot load checkpoint {}: {e}", path.display())))?;
        let train = train_config_of(&ckpt)?;
        if ckpt.drift.dim() != inst.dim {
            return Err(CliError::usage(format!(
                "checkpoint dimension {} does not match instance dimension {}",
                ckpt.drift.dim(),
                inst.dim
            )));
        }
        if train.epsilon != inst.epsilon {
            return Err(CliError::usage(format!(
                "checkpoint epsilon {} does not match instance epsilon {}",
                train.epsilon, inst.epsilon
            )));
        }
        let mut cfg = ExperimentConfig {
            task: Task::Custom {
                instance: a.instance.clone(),
            },
            train,
            eval: EvalSettings {
                n_samples: Some(a.n_samples),
                t_grid: a.t_grid.clone(),
                trajectories: a.trajectories,
            },
            output_dir: None,
            seed: Some(a.seed),
        };
        cfg.train.seed = a.seed;
        cfg.validate()?;
        let plan = inst.plan()?;
        let mut p0 = SeededSampler::gaussian(&plan.p0, derive_seed(a.seed, labels::EVAL_P0))?;
        let noise = NoiseStream::new(derive_seed(a.seed, labels::EVAL_NOISE), 0);
        let r = evaluate_gaussian(&ckpt.drift, &cfg.train.sde(), &plan, &mut p0, a.n_samples, &a.t_grid, noise)?;
        let mut m = BTreeMap::new();
        m.insert("plan_uvp".to_string(), r.plan_uvp);
        m.insert("target_uvp".to_string(), r.target_uvp);
        for (t, v) in r.marginal_uvp {
            m.insert(marginal_key(t), v);
        }
        let mut src = SeededSampler::gaussian(&plan.p0, derive_seed(a.seed, labels::TRAJECTORY))?;
        export_trajectories(&a.output, &ckpt.drift, &cfg, &mut src, a.trajectories, Some(path))?;
        (m, config_hash(&ckpt.config))
    };
    let records = metric_records(&metrics, a.n_samples, a.seed, &hash);
    write_json(&a.output.join("eval.json"), &records)?;
    write_metric_csv(&a.output.join("eval.csv"), &records)?;
    for r in &records {
        println!("{} = {}", r.metric, r.value);
    }
    Ok(metrics)
}

/// The training configuration stored in a checkpoint written by `train`.
fn train_config_of(ckpt: &Checkpoint) -> CliResult<TrainConfig> {
    let train = ckpt
        .config
        .get("train")
        .ok_or_else(|| CliError::usage("checkpoint carries no training configuration"))?;
    serde_json::from_value(train.clone()).map_err(|e| CliError::usage(format!("checkpoint configuration: {e}")))
}
