//! Training runs and their output directories.

use std::collections::BTreeMap;
use std::fs;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use enot::datagen::{Sampler, SeededSampler};
use enot::gaussian_oracle::{GaussianEotPlan, GaussianInstance};
use enot::metrics::{config_hash, MetricRecord};
use enot::nets::{Checkpoint, DriftModel, PotentialModel};
use enot::rng::{derive_seed, NoiseStream};
use enot::sde::{euler_maruyama, sha256_hex, write_trajectory_csv, TrajectoryMeta};
use enot::training::{evaluate_gaussian, evaluate_toy, train_enot, IterRecord, TrainObserver, TrainStatus};

use crate::config::{ExperimentConfig, Task};
use crate::error::{CliError, CliResult};

/// Seed labels of the samplers and noise streams a run derives from its seed.
pub mod labels {
    pub const TRAIN_P0: u64 = 100;
    pub const TRAIN_P1: u64 = 101;
    pub const EVAL_P0: u64 = 102;
    pub const EVAL_P1: u64 = 103;
    pub const EVAL_NOISE: u64 = 104;
    pub const TRAJECTORY: u64 = 105;
}

/// Source and target samplers of a task.
pub struct Problem {
    pub instance: Option<GaussianInstance>,
    pub plan: Option<GaussianEotPlan>,
    task: Task,
}

impl Problem {
    pub fn new(cfg: &ExperimentConfig) -> CliResult<Self> {
        let instance = cfg.instance()?;
        let plan = instance.as_ref().map(|i| i.plan()).transpose()?;
        Ok(Self {
            instance,
            plan,
            task: cfg.task.clone(),
        })
    }

    pub fn samplers(&self, seed: u64, l0: u64, l1: u64) -> CliResult<(SeededSampler, SeededSampler)> {
        let (s0, s1) = (derive_seed(seed, l0), derive_seed(seed, l1));
        Ok(match (&self.task, &self.plan) {
            (Task::Toy { source, target }, _) => {
                (SeededSampler::toy(source.clone(), s0)?, SeededSampler::toy(target.clone(), s1)?)
            }
            (_, Some(plan)) => (SeededSampler::gaussian(&plan.p0, s0)?, SeededSampler::gaussian(&plan.p1, s1)?),
            _ => unreachable!("Gaussian tasks carry a plan"),
        })
    }

    /// Final metrics of a drift, keyed by metric name.
    pub fn evaluate(&self, cfg: &ExperimentConfig, drift: &DriftModel) -> CliResult<BTreeMap<String, f64>> {
        let seed = cfg.seed();
        let (mut p0, mut p1) = self.samplers(seed, labels::EVAL_P0, labels::EVAL_P1)?;
        let noise = NoiseStream::new(derive_seed(seed, labels::EVAL_NOISE), 0);
        let sde = cfg.train.sde();
        let n = cfg.eval_samples();
        let mut out = BTreeMap::new();
        match &self.plan {
            Some(plan) => {
                let r = evaluate_gaussian(drift, &sde, plan, &mut p0, n, &cfg.eval.t_grid, noise)?;
                out.insert("plan_uvp".to_string(), r.plan_uvp);
                out.insert("target_uvp".to_string(), r.target_uvp);
                for (t, v) in r.marginal_uvp {
                    out.insert(marginal_key(t), v);
                }
            }
            None => {
                let (r, _, _) = evaluate_toy(drift, &sde, &mut p0, &mut p1, n, noise)?;
                out.insert("energy_distance".to_string(), r.model);
                out.insert("energy_distance_identity".to_string(), r.identity);
            }
        }
        Ok(out)
    }
}

pub fn marginal_key(t: f64) -> String {
    format!("marginal_uvp_t{t}")
}

/// Writes `value` as pretty JSON.
pub fn write_json<T: serde::Serialize>(path: &Path, value: &T) -> CliResult<()> {
    fs::write(path, serde_json::to_string_pretty(value)? + "\n")?;
    Ok(())
}

pub fn metric_records(metrics: &BTreeMap<String, f64>, n: usize, seed: u64, hash: &str) -> Vec<MetricRecord> {
    metrics
        .iter()
        .map(|(k, &v)| MetricRecord {
            metric: k.clone(),
            value: v,
            n_samples: n,
            seed,
            config_hash: hash.to_string(),
        })
        .collect()
}

pub fn write_metric_csv(path: &Path, records: &[MetricRecord]) -> CliResult<()> {
    let mut w = BufWriter::new(fs::File::create(path)?);
    writeln!(w, "metric,value,n_samples,seed,config_hash")?;
    for r in records {
        writeln!(w, "{},{},{},{},{}", r.metric, r.value, r.n_samples, r.seed, r.config_hash)?;
    }
    w.flush()?;
    Ok(())
}

/// Simulates `n` trajectories from fresh source samples and writes the CSV
/// with its metadata sidecar.
pub fn export_trajectories(
    dir: &Path,
    drift: &DriftModel,
    cfg: &ExperimentConfig,
    source: &mut dyn Sampler,
    n: usize,
    checkpoint: Option<&Path>,
) -> CliResult<()> {
    if n == 0 {
        return Ok(());
    }
    let seed = cfg.seed();
    let x0 = source.sample(n)?;
    let noise = NoiseStream::new(derive_seed(seed, labels::TRAJECTORY), 0);
    let traj = euler_maruyama(&x0, drift, &cfg.train.sde(), noise)?;
    let mut w = BufWriter::new(fs::File::create(dir.join("trajectories.csv"))?);
    write_trajectory_csv(&traj, &mut w)?;
    w.flush()?;
    let checkpoint_sha256 = checkpoint.map(fs::read).transpose()?.map(|b| sha256_hex(&b));
    let meta = TrajectoryMeta {
        epsilon: cfg.train.epsilon,
        n_steps: cfg.train.n_steps,
        seed,
        checkpoint_sha256,
    };
    write_json(&dir.join("trajectories.meta.json"), &meta)
}

struct RunObserver<'a> {
    dir: &'a Path,
    cfg: &'a ExperimentConfig,
    config_json: serde_json::Value,
    problem: &'a Problem,
    history: BufWriter<fs::File>,
    curves: BufWriter<fs::File>,
    log_every: u64,
}

impl TrainObserver for RunObserver<'_> {
    fn evaluate(&mut self, iter: u64, drift: &DriftModel, potential: &PotentialModel) -> enot::Result<BTreeMap<String, f64>> {
        Checkpoint::new(iter, drift.clone(), potential.clone(), self.config_json.clone())
            .save(self.dir.join(format!("ckpt_{iter}.json")))?;
        let metrics = self
            .problem
            .evaluate(self.cfg, drift)
            .map_err(|e| enot::Error::Numerical(format!("evaluation at iteration {iter}: {e}")))?;
        for (k, v) in &metrics {
            writeln!(self.curves, "{iter},{k},{v}")?;
        }
        self.curves.flush()?;
        let summary: Vec<String> = metrics.iter().map(|(k, v)| format!("{k}={v:.6}")).collect();
        eprintln!("iter {iter}: {}", summary.join(" "));
        Ok(metrics)
    }

    fn record(&mut self, r: &IterRecord) -> enot::Result<()> {
        writeln!(self.history, "{}", serde_json::to_string(r)?)?;
        if r.iter.is_multiple_of(self.log_every) {
            self.history.flush()?;
            eprintln!("iter {}: loss_beta={:.6} loss_f={:.6} energy={:.6}", r.iter, r.loss_beta, r.loss_f, r.energy);
        }
        Ok(())
    }
}

/// Runs one experiment into its output directory.
///
/// Writes `config.json` (the input verbatim), `resolved_config.json`,
/// `run_info.json`, `history.jsonl`, `metric_curves.csv`, `ckpt_{iter}.json`
/// at every evaluation, `metrics.json`/`metrics.csv` and the trajectory CSV.
/// On divergence the artifacts written so far are kept, the last good models
/// are checkpointed, and a runtime error is returned.
pub fn run_experiment(cfg: &ExperimentConfig, echo: &str, dir: &Path) -> CliResult<PathBuf> {
    cfg.validate()?;
    let problem = Problem::new(cfg)?;
    fs::create_dir_all(dir).map_err(|e| CliError::runtime(format!("cannot create {}: {e}", dir.display())))?;
    fs::write(dir.join("config.json"), echo)?;
    let config_json = serde_json::to_value(cfg)?;
    write_json(&dir.join("resolved_config.json"), &config_json)?;
    write_json(
        &dir.join("run_info.json"),
        &serde_json::json!({
            "seed": cfg.seed(),
            "enot_version": env!("CARGO_PKG_VERSION"),
            "checkpoint_format": enot::nets::CHECKPOINT_VERSION,
            "config_hash": config_hash(&config_json),
            "args": std::env::args().collect::<Vec<_>>(),
        }),
    )?;
    if let Some(inst) = &problem.instance {
        inst.save(dir.join("instance.json"))?;
    }

    let seed = cfg.seed();
    let (mut p0, mut p1) = problem.samplers(seed, labels::TRAIN_P0, labels::TRAIN_P1)?;
    let mut curves = BufWriter::new(fs::File::create(dir.join("metric_curves.csv"))?);
    writeln!(curves, "iter,metric,value")?;
    let mut obs = RunObserver {
        dir,
        cfg,
        config_json: config_json.clone(),
        problem: &problem,
        history: BufWriter::new(fs::File::create(dir.join("history.jsonl"))?),
        curves,
        log_every: (cfg.train.total_outer_iters as u64 / 20).max(1),
    };
    let outcome = train_enot(&mut p0, &mut p1, &cfg.train, &mut obs);
    obs.history.flush()?;
    obs.curves.flush()?;
    let outcome = outcome?;

    let last = outcome.history.last().map_or(0, |r| r.iter);
    let ckpt_path = dir.join(format!("ckpt_{last}.json"));
    if !ckpt_path.exists() {
        Checkpoint::new(last, outcome.drift.clone(), outcome.potential.clone(), config_json.clone()).save(&ckpt_path)?;
    }
    if let TrainStatus::Diverged { iter, message } = &outcome.status {
        return Err(CliError::runtime(format!(
            "training diverged at iteration {iter}: {message}; last good checkpoint {}",
            ckpt_path.display()
        )));
    }

    let metrics = match outcome.history.last() {
        Some(r) if !r.eval.is_empty() => r.eval.clone(),
        _ => problem.evaluate(cfg, &outcome.drift)?,
    };
    let records = metric_records(&metrics, cfg.eval_samples(), seed, &config_hash(&config_json));
    write_json(&dir.join("metrics.json"), &records)?;
    write_metric_csv(&dir.join("metrics.csv"), &records)?;
    let (mut src, _) = problem.samplers(seed, labels::TRAJECTORY, labels::TRAJECTORY + 1)?;
    export_trajectories(dir, &outcome.drift, cfg, &mut src, cfg.eval.trajectories, Some(&ckpt_path))?;
    for r in &records {
        println!("{} = {}", r.metric, r.value);
    }
    Ok(ckpt_path)
}
