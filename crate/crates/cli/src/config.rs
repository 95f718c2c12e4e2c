//! Experiment configuration files.
//!
//! Precedence: command-line flags, then the top-level `seed` and
//! `output_dir` fields, then the values inside `train`.

use std::path::{Path, PathBuf};

use enot::datagen::ToyDistribution;
use enot::gaussian_oracle::GaussianInstance;
use enot::training::TrainConfig;
use serde::{Deserialize, Serialize};

use crate::error::{CliError, CliResult};

pub const OUTPUT_ROOT_ENV: &str = "ENOT_OUTPUT_ROOT";
const DEFAULT_OUTPUT_ROOT: &str = "runs";

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum Task {
    /// 2-D sample-based distributions
    Toy {
        #[serde(default = "ToyDistribution::gaussian")]
        source: ToyDistribution,
        target: ToyDistribution,
    },
    /// random zero-mean Gaussian pair generated from `instance_seed`; the
    /// entropic parameter is `train.epsilon`
    GaussBench { dim: usize, instance_seed: u64 },
    /// Gaussian pair read from an instance file
    Custom { instance: PathBuf },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EvalSettings {
    /// defaults to [`GAUSSIAN_EVAL_SAMPLES`] or [`TOY_EVAL_SAMPLES`]
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub n_samples: Option<usize>,
    /// times of the intermediate-marginal metrics (Gaussian tasks)
    #[serde(default = "default_t_grid")]
    pub t_grid: Vec<f64>,
    /// trajectories written to `trajectories.csv` after training
    #[serde(default = "default_trajectories")]
    pub trajectories: usize,
}

/// Sample count of the Gaussian metrics.
pub const GAUSSIAN_EVAL_SAMPLES: usize = 100_000;
/// Sample count of the toy energy distance, which costs O(n^2).
pub const TOY_EVAL_SAMPLES: usize = 5_000;

pub fn default_t_grid() -> Vec<f64> {
    vec![0.0, 0.2, 0.4, 0.6, 0.8, 1.0]
}

fn default_trajectories() -> usize {
    64
}

impl Default for EvalSettings {
    fn default() -> Self {
        Self {
            n_samples: None,
            t_grid: default_t_grid(),
            trajectories: default_trajectories(),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub task: Task,
    pub train: TrainConfig,
    #[serde(default)]
    pub eval: EvalSettings,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub output_dir: Option<PathBuf>,
    /// overrides `train.seed`
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
}

/// Flag values that take precedence over the file.
#[derive(Clone, Debug, Default)]
pub struct Overrides {
    pub seed: Option<u64>,
    pub iters: Option<usize>,
    pub output: Option<PathBuf>,
}

/// Full-size settings of the Gaussian benchmark.
pub fn gaussian_train_defaults() -> TrainConfig {
    TrainConfig {
        epsilon: 1.0,
        n_steps: 200,
        total_outer_iters: 10_000,
        hidden_f: vec![512, 512],
        hidden_beta: vec![512, 512],
        ..TrainConfig::default()
    }
}

impl ExperimentConfig {
    /// Reads a config file; a missing file is a usage error naming the path.
    pub fn load(path: &Path) -> CliResult<(Self, String)> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::usage(format!("cannot read config file {}: {e}", path.display())))?;
        let cfg = serde_json::from_str(&text)
            .map_err(|e| CliError::usage(format!("invalid config file {}: {e}", path.display())))?;
        Ok((cfg, text))
    }

    /// Applies overrides; afterwards `train.seed` is the effective seed.
    pub fn resolve(mut self, o: &Overrides) -> Self {
        if let Some(s) = o.seed.or(self.seed) {
            self.train.seed = s;
        }
        self.seed = Some(self.train.seed);
        if let Some(n) = o.iters {
            self.train.total_outer_iters = n;
        }
        if o.output.is_some() {
            self.output_dir = o.output.clone();
        }
        self
    }

    pub fn seed(&self) -> u64 {
        self.train.seed
    }

    pub fn eval_samples(&self) -> usize {
        self.eval.n_samples.unwrap_or(if self.is_gaussian() {
            GAUSSIAN_EVAL_SAMPLES
        } else {
            TOY_EVAL_SAMPLES
        })
    }

    pub fn is_gaussian(&self) -> bool {
        !matches!(self.task, Task::Toy { .. })
    }

    pub fn validate(&self) -> CliResult<()> {
        self.train.validate()?;
        match &self.task {
            Task::Toy { source, target } => {
                source.validate()?;
                target.validate()?;
                if source.dim() != target.dim() {
                    return Err(CliError::usage("toy source and target dimensions differ"));
                }
            }
            Task::GaussBench { dim, .. } => {
                if *dim == 0 {
                    return Err(CliError::usage("gauss_bench dim must be at least 1"));
                }
            }
            Task::Custom { instance } => {
                if !instance.exists() {
                    return Err(CliError::usage(format!("instance file {} does not exist", instance.display())));
                }
            }
        }
        if self.eval_samples() < 2 {
            return Err(CliError::usage("eval.n_samples must be at least 2"));
        }
        if self.is_gaussian() {
            let n = self.train.n_steps as f64;
            for &t in &self.eval.t_grid {
                if !(0.0..=1.0).contains(&t) || ((t * n) - (t * n).round()).abs() > 1e-9 {
                    return Err(CliError::usage(format!(
                        "eval.t_grid entry {t} is not a multiple of 1/n_steps = 1/{}",
                        self.train.n_steps
                    )));
                }
            }
        }
        Ok(())
    }

    /// The Gaussian instance of a Gaussian task.
    pub fn instance(&self) -> CliResult<Option<GaussianInstance>> {
        Ok(match &self.task {
            Task::Toy { .. } => None,
            Task::GaussBench { dim, instance_seed } => {
                let (p0, p1) = enot::datagen::make_gaussian_benchmark(*dim, *instance_seed)?;
                Some(GaussianInstance::new(&p0, &p1, self.train.epsilon, *instance_seed))
            }
            Task::Custom { instance } => {
                let inst = GaussianInstance::load(instance)
                    .map_err(|e| CliError::usage(format!("cannot load instance {}: {e}", instance.display())))?;
                if inst.epsilon != self.train.epsilon {
                    return Err(CliError::usage(format!(
                        "instance epsilon {} differs from train.epsilon {}",
                        inst.epsilon, self.train.epsilon
                    )));
                }
                Some(inst)
            }
        })
    }

    /// Flag, then config field, then `$ENOT_OUTPUT_ROOT/<name>`, then
    /// `runs/<name>`.
    pub fn output_dir(&self, name: &str) -> PathBuf {
        if let Some(d) = &self.output_dir {
            return d.clone();
        }
        let root = std::env::var_os(OUTPUT_ROOT_ENV)
            .map(PathBuf::from)
            .unwrap_or_else(|| PathBuf::from(DEFAULT_OUTPUT_ROOT));
        root.join(name)
    }
}
