use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::autodiff::{kernels, Graph, Tensor, Var};
use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Activation {
    Relu,
    LeakyRelu { slope: f64 },
}

impl Activation {
    fn apply(self, v: f64) -> f64 {
        match self {
            Activation::Relu => v.max(0.0),
            Activation::LeakyRelu { slope } => {
                if v > 0.0 {
                    v
                } else {
                    slope * v
                }
            }
        }
    }

    fn apply_graph(self, g: &mut Graph, x: Var) -> Result<Var> {
        match self {
            Activation::Relu => g.relu(x),
            Activation::LeakyRelu { slope } => g.leaky_relu(x, slope),
        }
    }
}

/// One affine layer: `weight` is `[out, in]`, `bias` is `[out]`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Layer {
    pub weight: Tensor,
    pub bias: Tensor,
}

impl Layer {
    pub fn in_dim(&self) -> usize {
        self.weight.shape()[1]
    }

    pub fn out_dim(&self) -> usize {
        self.weight.shape()[0]
    }
}

/// Feed-forward network: affine layers with an activation after every layer
/// except the last.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MlpParams {
    layers: Vec<Layer>,
    activations: Vec<Activation>,
}

impl MlpParams {
    /// He-uniform weights, zero biases. `dims` lists every width including
    /// input and output, so it needs at least two entries.
    pub fn new<R: Rng + ?Sized>(dims: &[usize], activation: Activation, rng: &mut R) -> Result<Self> {
        if dims.len() < 2 || dims.contains(&0) {
            return Err(Error::config(format!("invalid layer widths {dims:?}")));
        }
        let layers = dims
            .windows(2)
            .map(|w| {
                let (fan_in, fan_out) = (w[0], w[1]);
                let bound = (6.0 / fan_in as f64).sqrt();
                let data = (0..fan_in * fan_out)
                    .map(|_| rng.random_range(-bound..bound))
                    .collect();
                Layer {
                    weight: Tensor::new(vec![fan_out, fan_in], data).expect("sized above"),
                    bias: Tensor::zeros(&[fan_out]),
                }
            })
            .collect::<Vec<_>>();
        let activations = vec![activation; layers.len() - 1];
        Ok(Self { layers, activations })
    }

    pub fn from_layers(layers: Vec<Layer>, activations: Vec<Activation>) -> Result<Self> {
        if layers.is_empty() {
            return Err(Error::config("an MLP needs at least one layer"));
        }
        if activations.len() != layers.len() - 1 {
            return Err(Error::config(format!(
                "{} layers need {} activations, got {}",
                layers.len(),
                layers.len() - 1,
                activations.len()
            )));
        }
        for l in &layers {
            if l.weight.ndim() != 2 || l.bias.shape() != [l.out_dim()] {
                return Err(Error::shape("mlp", l.weight.shape(), l.bias.shape()));
            }
        }
        for w in layers.windows(2) {
            if w[0].out_dim() != w[1].in_dim() {
                return Err(Error::shape("mlp", w[0].weight.shape(), w[1].weight.shape()));
            }
        }
        Ok(Self { layers, activations })
    }

    pub fn layers(&self) -> &[Layer] {
        &self.layers
    }

    pub fn activations(&self) -> &[Activation] {
        &self.activations
    }

    pub fn input_dim(&self) -> usize {
        self.layers[0].in_dim()
    }

    pub fn output_dim(&self) -> usize {
        self.layers[self.layers.len() - 1].out_dim()
    }

    pub fn num_params(&self) -> usize {
        self.layers
            .iter()
            .map(|l| l.weight.numel() + l.bias.numel())
            .sum()
    }

    pub fn zero_last_layer(&mut self) {
        let last = self.layers.last_mut().expect("non-empty");
        last.weight.data_mut().fill(0.0);
        last.bias.data_mut().fill(0.0);
    }

    /// Multiplies the network output by `c` (scales the final layer).
    pub fn scale_output(&mut self, c: f64) {
        let last = self.layers.last_mut().expect("non-empty");
        last.weight.data_mut().iter_mut().for_each(|v| *v *= c);
        last.bias.data_mut().iter_mut().for_each(|v| *v *= c);
    }

    /// Parameters in a fixed order: weight then bias for each layer.
    pub fn params(&self) -> Vec<&Tensor> {
        self.layers.iter().flat_map(|l| [&l.weight, &l.bias]).collect()
    }

    pub fn params_mut(&mut self) -> Vec<&mut Tensor> {
        self.layers
            .iter_mut()
            .flat_map(|l| [&mut l.weight, &mut l.bias])
            .collect()
    }

    pub fn is_finite(&self) -> bool {
        self.params().iter().all(|p| p.is_finite())
    }

    /// Gradient-free forward pass on `[B, in]`.
    pub fn forward(&self, x: &Tensor) -> Result<Tensor> {
        if x.ndim() != 2 || x.shape()[1] != self.input_dim() {
            return Err(Error::shape("mlp_forward", x.shape(), self.layers[0].weight.shape()));
        }
        let rows = x.shape()[0];
        let mut h = x.data().to_vec();
        for (i, layer) in self.layers.iter().enumerate() {
            h = kernels::linear_forward(&h, rows, layer.weight.data(), layer.out_dim(), layer.bias.data());
            if let Some(act) = self.activations.get(i) {
                h.iter_mut().for_each(|v| *v = act.apply(*v));
            }
        }
        Tensor::new(vec![rows, self.output_dim()], h)
    }

    /// Inserts the parameters into `g` as leaves.
    pub fn bind(&self, g: &mut Graph, trainable: bool) -> BoundMlp {
        let layers = self
            .layers
            .iter()
            .map(|l| {
                (
                    g.leaf(l.weight.clone(), trainable),
                    g.leaf(l.bias.clone(), trainable),
                )
            })
            .collect();
        BoundMlp {
            layers,
            activations: self.activations.clone(),
        }
    }
}

/// Parameters of an [`MlpParams`] living in a graph.
#[derive(Clone, Debug)]
pub struct BoundMlp {
    layers: Vec<(Var, Var)>,
    activations: Vec<Activation>,
}

impl BoundMlp {
    pub fn forward(&self, g: &mut Graph, x: Var) -> Result<Var> {
        let mut h = x;
        for (i, &(w, b)) in self.layers.iter().enumerate() {
            h = g.linear(h, w, b)?;
            if let Some(act) = self.activations.get(i) {
                h = act.apply_graph(g, h)?;
            }
        }
        Ok(h)
    }

    /// Leaf handles in the same order as [`MlpParams::params`].
    pub fn params(&self) -> Vec<Var> {
        self.layers.iter().flat_map(|&(w, b)| [w, b]).collect()
    }

    /// Collects the accumulated gradients, zeros for leaves backward never reached.
    pub fn grads(&self, g: &Graph) -> Vec<Tensor> {
        self.params()
            .into_iter()
            .map(|v| {
                g.grad(v)
                    .cloned()
                    .unwrap_or_else(|| Tensor::zeros(g.value(v).shape()))
            })
            .collect()
    }
}
