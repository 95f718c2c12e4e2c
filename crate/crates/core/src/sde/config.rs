use serde::{Deserialize, Serialize};

use crate::autodiff::{Graph, Tensor, Var};
use crate::error::{Error, Result};
use crate::nets::{BoundDrift, DriftModel};

/// Settings of `dX = f(X, t) dt + sqrt(epsilon) dW` on `t in [0, 1]`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SdeConfig {
    pub epsilon: f64,
    pub n_steps: usize,
    /// when false the final step is deterministic
    #[serde(default = "default_true")]
    pub last_step_noise: bool,
    /// reference drift `v` of the prior process; only the energy reads it
    #[serde(default)]
    pub prior: PriorDrift,
    /// reject non-finite drifts and states
    #[serde(default)]
    pub strict: bool,
}

fn default_true() -> bool {
    true
}

impl SdeConfig {
    pub fn new(epsilon: f64, n_steps: usize) -> Self {
        Self {
            epsilon,
            n_steps,
            last_step_noise: true,
            prior: PriorDrift::Zero,
            strict: false,
        }
    }

    pub fn dt(&self) -> f64 {
        1.0 / self.n_steps as f64
    }

    /// Time of the state before step `n`.
    pub fn time(&self, n: usize) -> f64 {
        n as f64 / self.n_steps as f64
    }

    /// Whether step `n` (0-based) adds noise.
    pub fn step_has_noise(&self, n: usize) -> bool {
        self.epsilon > 0.0 && (self.last_step_noise || n + 1 < self.n_steps)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.epsilon >= 0.0 && self.epsilon.is_finite()) {
            return Err(Error::config(format!("epsilon must be finite and >= 0, got {}", self.epsilon)));
        }
        if self.n_steps == 0 {
            return Err(Error::config("n_steps must be at least 1"));
        }
        self.prior.validate()
    }
}

/// Gradient-free vector field `(x: [B, D], t, dt) -> [B, D]`.
pub trait VectorField {
    fn eval_field(&self, x: &Tensor, t: f64, dt: f64) -> Result<Tensor>;
}

impl VectorField for DriftModel {
    fn eval_field(&self, x: &Tensor, t: f64, dt: f64) -> Result<Tensor> {
        self.eval(x, t, dt)
    }
}

impl<F> VectorField for F
where
    F: Fn(&Tensor, f64) -> Result<Tensor>,
{
    fn eval_field(&self, x: &Tensor, t: f64, _dt: f64) -> Result<Tensor> {
        self(x, t)
    }
}

/// Vector field recorded in a [`Graph`].
pub trait TrackedField {
    fn eval_tracked(&self, g: &mut Graph, x: Var, t: f64, dt: f64) -> Result<Var>;
}

impl TrackedField for BoundDrift {
    fn eval_tracked(&self, g: &mut Graph, x: Var, t: f64, dt: f64) -> Result<Var> {
        self.eval(g, x, t, dt)
    }
}

impl<F> TrackedField for F
where
    F: Fn(&mut Graph, Var, f64) -> Result<Var>,
{
    fn eval_tracked(&self, g: &mut Graph, x: Var, t: f64, _dt: f64) -> Result<Var> {
        self(g, x, t)
    }
}

/// Drift `v` of the reference process `dX = v dt + sqrt(epsilon) dW`.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum PriorDrift {
    /// Brownian motion
    #[default]
    Zero,
    /// `v(x, t) = A x + b` with `matrix: [D, D]`, `offset: [D]`
    Affine { matrix: Tensor, offset: Tensor },
    /// a frozen drift network
    Model { drift: DriftModel },
}

impl PriorDrift {
    pub fn is_zero(&self) -> bool {
        matches!(self, PriorDrift::Zero)
    }

    fn validate(&self) -> Result<()> {
        if let PriorDrift::Affine { matrix, offset } = self {
            let d = offset.numel();
            if offset.ndim() != 1 || matrix.shape() != [d, d] {
                return Err(Error::config(format!(
                    "affine prior needs matrix [D, D] and offset [D], got {:?} and {:?}",
                    matrix.shape(),
                    offset.shape()
                )));
            }
        }
        Ok(())
    }

    /// Inserts the prior into `g` as constants.
    pub fn bind(&self, g: &mut Graph) -> BoundPrior {
        match self {
            PriorDrift::Zero => BoundPrior::Zero,
            PriorDrift::Affine { matrix, offset } => BoundPrior::Affine {
                matrix: g.constant(matrix.clone()),
                offset: g.constant(offset.clone()),
            },
            PriorDrift::Model { drift } => BoundPrior::Model(drift.bind(g, false)),
        }
    }
}

impl VectorField for PriorDrift {
    fn eval_field(&self, x: &Tensor, t: f64, dt: f64) -> Result<Tensor> {
        match self {
            PriorDrift::Zero => Ok(Tensor::zeros(x.shape())),
            PriorDrift::Affine { matrix, offset } => {
                if x.ndim() != 2 || x.cols() != offset.numel() {
                    return Err(Error::shape("prior_drift", x.shape(), matrix.shape()));
                }
                let mut g = Graph::new();
                let (xv, a, b) = (g.constant(x.clone()), g.constant(matrix.clone()), g.constant(offset.clone()));
                let v = g.linear(xv, a, b)?;
                Ok(g.value(v).clone())
            }
            PriorDrift::Model { drift } => drift.eval(x, t, dt),
        }
    }
}

/// A [`PriorDrift`] living in a graph.
#[derive(Clone, Debug)]
pub enum BoundPrior {
    Zero,
    Affine { matrix: Var, offset: Var },
    Model(BoundDrift),
}

impl BoundPrior {
    /// `None` for the zero prior.
    pub fn eval(&self, g: &mut Graph, x: Var, t: f64, dt: f64) -> Result<Option<Var>> {
        match self {
            BoundPrior::Zero => Ok(None),
            BoundPrior::Affine { matrix, offset } => g.linear(x, *matrix, *offset).map(Some),
            BoundPrior::Model(d) => d.eval(g, x, t, dt).map(Some),
        }
    }
}
