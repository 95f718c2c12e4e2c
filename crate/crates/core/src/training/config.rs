use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::nets::Parametrization;
use crate::sde::{PriorDrift, SdeConfig};

/// Hyperparameters of the saddle-point training loop.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrainConfig {
    pub epsilon: f64,
    pub n_steps: usize,
    /// drift updates per potential update
    pub inner_steps: usize,
    pub lr_f: f64,
    pub lr_beta: f64,
    pub batch_size: usize,
    pub total_outer_iters: usize,
    pub seed: u64,
    #[serde(default)]
    pub strict_finite: bool,
    /// evaluation cadence in outer iterations; 0 disables periodic evaluation
    pub eval_every: usize,
    pub hidden_f: Vec<usize>,
    pub hidden_beta: Vec<usize>,
    #[serde(default)]
    pub parametrization: Parametrization,
    #[serde(default = "default_true")]
    pub last_step_noise: bool,
    #[serde(default)]
    pub prior: PriorDrift,
    /// joint L2 cap on each gradient, if set
    #[serde(default)]
    pub grad_clip: Option<f64>,
}

fn default_true() -> bool {
    true
}

impl Default for TrainConfig {
    /// 2-D toy defaults.
    fn default() -> Self {
        Self {
            epsilon: 0.1,
            n_steps: 10,
            inner_steps: 10,
            lr_f: 1e-4,
            lr_beta: 1e-4,
            batch_size: 512,
            total_outer_iters: 20_000,
            seed: 0,
            strict_finite: false,
            eval_every: 500,
            hidden_f: vec![100, 100],
            hidden_beta: vec![100, 100],
            parametrization: Parametrization::Drift,
            last_step_noise: true,
            prior: PriorDrift::Zero,
            grad_clip: None,
        }
    }
}

impl TrainConfig {
    pub fn sde(&self) -> SdeConfig {
        SdeConfig {
            epsilon: self.epsilon,
            n_steps: self.n_steps,
            last_step_noise: self.last_step_noise,
            prior: self.prior.clone(),
            strict: self.strict_finite,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let positive = |name: &str, v: f64| {
            if v > 0.0 && v.is_finite() {
                Ok(())
            } else {
                Err(Error::config(format!("{name} must be positive, got {v}")))
            }
        };
        if self.inner_steps == 0 {
            return Err(Error::config("inner_steps must be at least 1"));
        }
        if self.batch_size == 0 {
            return Err(Error::config("batch_size must be at least 1"));
        }
        positive("lr_f", self.lr_f)?;
        positive("lr_beta", self.lr_beta)?;
        if let Some(c) = self.grad_clip {
            positive("grad_clip", c)?;
        }
        if self.hidden_f.iter().chain(&self.hidden_beta).any(|&h| h == 0) {
            return Err(Error::config("hidden layer widths must be positive"));
        }
        self.sde().validate()
    }
}
