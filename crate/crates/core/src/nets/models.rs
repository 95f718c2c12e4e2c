use rand::Rng;
use serde::{Deserialize, Serialize};

use super::mlp::{Activation, BoundMlp, MlpParams};
use crate::autodiff::{Graph, Tensor, Var};
use crate::error::{Error, Result};

/// How the drift network output is read.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Parametrization {
    /// the network outputs the drift `f(x, t)` directly
    #[default]
    Drift,
    /// the network outputs the next mean state `g(x, t) = x + f(x, t) dt`,
    /// so `f = (g - x) / dt`
    Residual,
}

/// Time-conditioned drift `f(x, t)`: an MLP on `[x, t]` with output width `D`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DriftModel {
    pub mlp: MlpParams,
    pub mode: Parametrization,
}

impl DriftModel {
    /// Fresh model for state dimension `dim`. The final layer starts at zero,
    /// so in `Drift` mode the initial field is `f = 0`.
    pub fn new<R: Rng + ?Sized>(
        dim: usize,
        hidden: &[usize],
        mode: Parametrization,
        rng: &mut R,
    ) -> Result<Self> {
        let mut dims = vec![dim + 1];
        dims.extend_from_slice(hidden);
        dims.push(dim);
        let mut mlp = MlpParams::new(&dims, Activation::Relu, rng)?;
        mlp.zero_last_layer();
        Ok(Self { mlp, mode })
    }

    pub fn from_mlp(mlp: MlpParams, mode: Parametrization) -> Result<Self> {
        if mlp.input_dim() != mlp.output_dim() + 1 {
            return Err(Error::config(format!(
                "drift network maps {} inputs to {} outputs; expected D + 1 -> D",
                mlp.input_dim(),
                mlp.output_dim()
            )));
        }
        Ok(Self { mlp, mode })
    }

    pub fn dim(&self) -> usize {
        self.mlp.output_dim()
    }

    /// Gradient-free `f(x, t)` for `x: [B, D]`. `dt` is only read in
    /// residual mode.
    pub fn eval(&self, x: &Tensor, t: f64, dt: f64) -> Result<Tensor> {
        check_time(t)?;
        if x.ndim() != 2 || x.shape()[1] != self.dim() {
            return Err(Error::shape("drift_eval", x.shape(), &[x.rows(), self.dim()]));
        }
        let input = x.hcat(&Tensor::full(&[x.rows(), 1], t))?;
        let out = self.mlp.forward(&input)?;
        match self.mode {
            Parametrization::Drift => Ok(out),
            Parametrization::Residual => {
                check_dt(dt)?;
                let inv = 1.0 / dt;
                let data = out
                    .data()
                    .iter()
                    .zip(x.data())
                    .map(|(g, x)| (g - x) * inv)
                    .collect();
                Tensor::new(x.shape().to_vec(), data)
            }
        }
    }

    /// Like [`DriftModel::eval`], but a non-finite drift is an error naming
    /// the time and the first offending batch row.
    pub fn eval_strict(&self, x: &Tensor, t: f64, dt: f64) -> Result<Tensor> {
        let f = self.eval(x, t, dt)?;
        ensure_finite_rows("drift_eval", t, &f)?;
        Ok(f)
    }

    pub fn bind(&self, g: &mut Graph, trainable: bool) -> BoundDrift {
        BoundDrift {
            mlp: self.mlp.bind(g, trainable),
            mode: self.mode,
            dim: self.dim(),
        }
    }
}

/// A [`DriftModel`] whose parameters live in a graph.
#[derive(Clone, Debug)]
pub struct BoundDrift {
    pub mlp: BoundMlp,
    mode: Parametrization,
    dim: usize,
}

impl BoundDrift {
    pub fn eval(&self, g: &mut Graph, x: Var, t: f64, dt: f64) -> Result<Var> {
        check_time(t)?;
        let rows = g.shape(x)[0];
        let tcol = g.constant(Tensor::full(&[rows, 1], t));
        let input = g.concat(&[x, tcol])?;
        let out = self.mlp.forward(g, input)?;
        let f = match self.mode {
            Parametrization::Drift => out,
            Parametrization::Residual => {
                check_dt(dt)?;
                let diff = g.sub(out, x)?;
                g.scale(diff, 1.0 / dt)?
            }
        };
        if g.is_strict() {
            ensure_finite_rows("drift_eval", t, g.value(f))?;
        }
        Ok(f)
    }

    pub fn dim(&self) -> usize {
        self.dim
    }
}

/// Scalar potential `beta(y)`: an MLP with output width 1.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PotentialModel {
    pub mlp: MlpParams,
}

impl PotentialModel {
    pub fn new<R: Rng + ?Sized>(dim: usize, hidden: &[usize], rng: &mut R) -> Result<Self> {
        let mut dims = vec![dim];
        dims.extend_from_slice(hidden);
        dims.push(1);
        Ok(Self {
            mlp: MlpParams::new(&dims, Activation::Relu, rng)?,
        })
    }

    pub fn from_mlp(mlp: MlpParams) -> Result<Self> {
        if mlp.output_dim() != 1 {
            return Err(Error::config(format!(
                "potential network must have one output, got {}",
                mlp.output_dim()
            )));
        }
        Ok(Self { mlp })
    }

    pub fn dim(&self) -> usize {
        self.mlp.input_dim()
    }

    /// `c * beta`, realized by scaling the last layer.
    pub fn scaled(&self, c: f64) -> Self {
        let mut mlp = self.mlp.clone();
        mlp.scale_output(c);
        Self { mlp }
    }

    /// Gradient-free `beta(y)` for `y: [B, D]`, returned as `[B]`.
    pub fn eval(&self, y: &Tensor) -> Result<Tensor> {
        let out = self.mlp.forward(y)?;
        out.reshape(vec![y.rows()])
    }

    pub fn eval_strict(&self, y: &Tensor) -> Result<Tensor> {
        let out = self.eval(y)?;
        if let Some(i) = out.data().iter().position(|v| !v.is_finite()) {
            return Err(Error::NonFinite {
                op: "potential_eval",
                context: Some(format!("batch index {i}")),
            });
        }
        Ok(out)
    }

    pub fn bind(&self, g: &mut Graph, trainable: bool) -> BoundPotential {
        BoundPotential {
            mlp: self.mlp.bind(g, trainable),
        }
    }
}

#[derive(Clone, Debug)]
pub struct BoundPotential {
    pub mlp: BoundMlp,
}

impl BoundPotential {
    /// `beta(y)` as a `[B]` variable.
    pub fn eval(&self, g: &mut Graph, y: Var) -> Result<Var> {
        let out = self.mlp.forward(g, y)?;
        g.sum(out, &[1])
    }
}

fn check_time(t: f64) -> Result<()> {
    if !(0.0..=1.0).contains(&t) {
        return Err(Error::config(format!("time {t} outside [0, 1]")));
    }
    Ok(())
}

fn check_dt(dt: f64) -> Result<()> {
    if !(dt > 0.0 && dt.is_finite()) {
        return Err(Error::config(format!("residual mode needs dt > 0, got {dt}")));
    }
    Ok(())
}

pub(crate) fn ensure_finite_rows(op: &'static str, t: f64, f: &Tensor) -> Result<()> {
    if let Some(pos) = f.data().iter().position(|v| !v.is_finite()) {
        return Err(Error::NonFinite {
            op,
            context: Some(format!("t = {t}, batch index {}", pos / f.cols().max(1))),
        });
    }
    Ok(())
}
