use super::kernels::{self, MatRef};
use super::Tensor;
use crate::error::{Error, Result};

/// Handle to a node of a [`Graph`].
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct Var(usize);

impl Var {
    pub fn id(self) -> usize {
        self.0
    }
}

#[derive(Clone, Debug)]
enum Op {
    Leaf,
    MatMul(Var, Var),
    Linear { x: Var, w: Var, b: Var },
    Add(Var, Var),
    Sub(Var, Var),
    Mul(Var, Var),
    Scale(Var, f64),
    AddScalar(Var),
    Relu(Var),
    LeakyRelu(Var, f64),
    Square(Var),
    Sum(Var, Vec<usize>),
    Mean(Var, Vec<usize>, usize),
    Concat(Vec<Var>),
    Slice { input: Var, axis: usize, start: usize },
}

#[derive(Debug)]
struct Node {
    value: Tensor,
    op: Op,
    requires_grad: bool,
    /// Accumulated gradient; only populated on leaves.
    grad: Option<Tensor>,
}

/// Append-only differentiation tape.
///
/// Nodes are stored in creation order, which is a topological order of the
/// graph, so `backward` walks the nodes once from the loss down to index 0.
/// Leaf gradients accumulate across `backward` calls until [`Graph::zero_grad`].
#[derive(Debug, Default)]
pub struct Graph {
    nodes: Vec<Node>,
    strict: bool,
}

impl Graph {
    pub fn new() -> Self {
        Self::default()
    }

    /// A graph that rejects any op producing NaN or infinity.
    pub fn strict() -> Self {
        Self {
            nodes: Vec::new(),
            strict: true,
        }
    }

    pub fn set_strict(&mut self, strict: bool) {
        self.strict = strict;
    }

    pub fn is_strict(&self) -> bool {
        self.strict
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    /// Trainable leaf.
    pub fn param(&mut self, value: Tensor) -> Var {
        self.leaf(value, true)
    }

    /// Leaf that never receives a gradient.
    pub fn constant(&mut self, value: Tensor) -> Var {
        self.leaf(value, false)
    }

    pub fn leaf(&mut self, value: Tensor, requires_grad: bool) -> Var {
        self.nodes.push(Node {
            value,
            op: Op::Leaf,
            requires_grad,
            grad: None,
        });
        Var(self.nodes.len() - 1)
    }

    /// Copy of `v` cut off from the graph: gradients stop here.
    pub fn detach(&mut self, v: Var) -> Var {
        let value = self.nodes[v.0].value.clone();
        self.constant(value)
    }

    pub fn value(&self, v: Var) -> &Tensor {
        &self.nodes[v.0].value
    }

    pub fn shape(&self, v: Var) -> &[usize] {
        self.nodes[v.0].value.shape()
    }

    pub fn requires_grad(&self, v: Var) -> bool {
        self.nodes[v.0].requires_grad
    }

    /// Gradient accumulated on a leaf, if any backward pass reached it.
    pub fn grad(&self, v: Var) -> Option<&Tensor> {
        self.nodes[v.0].grad.as_ref()
    }

    pub fn take_grad(&mut self, v: Var) -> Option<Tensor> {
        self.nodes[v.0].grad.take()
    }

    pub fn zero_grad(&mut self) {
        for n in &mut self.nodes {
            n.grad = None;
        }
    }

    fn push(&mut self, value: Tensor, op: Op, inputs: &[Var]) -> Result<Var> {
        if self.strict && !value.is_finite() {
            return Err(Error::NonFinite {
                op: op_name(&op),
                context: None,
            });
        }
        let requires_grad = inputs.iter().any(|i| self.nodes[i.0].requires_grad);
        self.nodes.push(Node {
            value,
            op,
            requires_grad,
            grad: None,
        });
        Ok(Var(self.nodes.len() - 1))
    }

    // ---- forward ops -------------------------------------------------------

    /// `[m, k] x [k, n] -> [m, n]`.
    pub fn matmul(&mut self, a: Var, b: Var) -> Result<Var> {
        let (ta, tb) = (self.value(a), self.value(b));
        if ta.ndim() != 2 || tb.ndim() != 2 || ta.shape()[1] != tb.shape()[0] {
            return Err(Error::shape("matmul", ta.shape(), tb.shape()));
        }
        let (m, k, n) = (ta.shape()[0], ta.shape()[1], tb.shape()[1]);
        let mut out = vec![0.0; m * n];
        kernels::gemm(
            MatRef::new(ta.data(), m, k),
            MatRef::new(tb.data(), k, n),
            &mut out,
            0.0,
        );
        let value = Tensor::new(vec![m, n], out)?;
        self.push(value, Op::MatMul(a, b), &[a, b])
    }

    /// Affine layer `x w^T + b` with `x: [B, in]`, `w: [out, in]`, `b: [out]`.
    pub fn linear(&mut self, x: Var, w: Var, b: Var) -> Result<Var> {
        let (tx, tw, tb) = (self.value(x), self.value(w), self.value(b));
        if tx.ndim() != 2 || tw.ndim() != 2 || tx.shape()[1] != tw.shape()[1] {
            return Err(Error::shape("linear", tx.shape(), tw.shape()));
        }
        if tb.shape() != [tw.shape()[0]] {
            return Err(Error::shape("linear", tw.shape(), tb.shape()));
        }
        let (rows, out_dim) = (tx.shape()[0], tw.shape()[0]);
        let out = kernels::linear_forward(tx.data(), rows, tw.data(), out_dim, tb.data());
        let value = Tensor::new(vec![rows, out_dim], out)?;
        self.push(value, Op::Linear { x, w, b }, &[x, w, b])
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        let value = self.binary("add", a, b, |x, y| x + y)?;
        self.push(value, Op::Add(a, b), &[a, b])
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Result<Var> {
        let value = self.binary("sub", a, b, |x, y| x - y)?;
        self.push(value, Op::Sub(a, b), &[a, b])
    }

    /// Elementwise product.
    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var> {
        let value = self.binary("mul", a, b, |x, y| x * y)?;
        self.push(value, Op::Mul(a, b), &[a, b])
    }

    pub fn scale(&mut self, a: Var, c: f64) -> Result<Var> {
        let value = self.value(a).scale(c);
        self.push(value, Op::Scale(a, c), &[a])
    }

    pub fn add_scalar(&mut self, a: Var, c: f64) -> Result<Var> {
        let value = self.value(a).map(|v| v + c);
        self.push(value, Op::AddScalar(a), &[a])
    }

    pub fn relu(&mut self, a: Var) -> Result<Var> {
        let value = self.value(a).map(|v| if v > 0.0 { v } else { 0.0 });
        self.push(value, Op::Relu(a), &[a])
    }

    pub fn leaky_relu(&mut self, a: Var, slope: f64) -> Result<Var> {
        let value = self.value(a).map(|v| if v > 0.0 { v } else { slope * v });
        self.push(value, Op::LeakyRelu(a, slope), &[a])
    }

    pub fn square(&mut self, a: Var) -> Result<Var> {
        let value = self.value(a).map(|v| v * v);
        self.push(value, Op::Square(a), &[a])
    }

    /// Sum over `axes`, removing them from the shape.
    pub fn sum(&mut self, a: Var, axes: &[usize]) -> Result<Var> {
        let t = self.value(a);
        let axes = kernels::normalize_axes("sum", axes, t.ndim())?;
        let (data, shape) = kernels::reduce_sum(t.data(), t.shape(), &axes);
        let value = Tensor::new(shape, data)?;
        self.push(value, Op::Sum(a, axes), &[a])
    }

    /// Sum of all elements as a 0-d tensor.
    pub fn sum_all(&mut self, a: Var) -> Result<Var> {
        let axes: Vec<usize> = (0..self.value(a).ndim()).collect();
        self.sum(a, &axes)
    }

    /// Mean over `axes`, removing them from the shape.
    pub fn mean(&mut self, a: Var, axes: &[usize]) -> Result<Var> {
        let t = self.value(a);
        let axes = kernels::normalize_axes("mean", axes, t.ndim())?;
        let count: usize = axes.iter().map(|&i| t.shape()[i]).product();
        if count == 0 {
            return Err(Error::Empty("mean"));
        }
        let (mut data, shape) = kernels::reduce_sum(t.data(), t.shape(), &axes);
        let inv = 1.0 / count as f64;
        data.iter_mut().for_each(|v| *v *= inv);
        let value = Tensor::new(shape, data)?;
        self.push(value, Op::Mean(a, axes, count), &[a])
    }

    pub fn mean_all(&mut self, a: Var) -> Result<Var> {
        let axes: Vec<usize> = (0..self.value(a).ndim()).collect();
        self.mean(a, &axes)
    }

    /// Concatenation along the last axis; all other axes must agree.
    pub fn concat(&mut self, inputs: &[Var]) -> Result<Var> {
        let Some(&first) = inputs.first() else {
            return Err(Error::Empty("concat"));
        };
        let lead = self.value(first).shape().split_last().map(|(_, l)| l.to_vec());
        let Some(lead) = lead else {
            return Err(Error::InvalidShape {
                op: "concat",
                msg: "cannot concatenate 0-d tensors".into(),
            });
        };
        let mut widths = Vec::with_capacity(inputs.len());
        for &v in inputs {
            let s = self.value(v).shape();
            if s.len() != lead.len() + 1 || s[..lead.len()] != lead[..] {
                return Err(Error::shape("concat", self.value(first).shape(), s));
            }
            widths.push(s[lead.len()]);
        }
        let rows: usize = lead.iter().product();
        let total: usize = widths.iter().sum();
        let mut data = Vec::with_capacity(rows * total);
        for r in 0..rows {
            for (&v, &w) in inputs.iter().zip(&widths) {
                data.extend_from_slice(&self.value(v).data()[r * w..(r + 1) * w]);
            }
        }
        let mut shape = lead;
        shape.push(total);
        let value = Tensor::new(shape, data)?;
        self.push(value, Op::Concat(inputs.to_vec()), inputs)
    }

    /// Elements `start..end` along `axis`.
    pub fn slice(&mut self, a: Var, axis: usize, start: usize, end: usize) -> Result<Var> {
        let t = self.value(a);
        if axis >= t.ndim() || start > end || end > t.shape()[axis] {
            return Err(Error::InvalidShape {
                op: "slice",
                msg: format!(
                    "range {start}..{end} on axis {axis} of shape {:?}",
                    t.shape()
                ),
            });
        }
        let outer: usize = t.shape()[..axis].iter().product();
        let inner: usize = t.shape()[axis + 1..].iter().product();
        let dim = t.shape()[axis];
        let mut data = Vec::with_capacity(outer * (end - start) * inner);
        for o in 0..outer {
            let base = o * dim * inner;
            data.extend_from_slice(&t.data()[base + start * inner..base + end * inner]);
        }
        let mut shape = t.shape().to_vec();
        shape[axis] = end - start;
        let value = Tensor::new(shape, data)?;
        self.push(value, Op::Slice { input: a, axis, start }, &[a])
    }

    fn binary(&self, op: &'static str, a: Var, b: Var, f: impl Fn(f64, f64) -> f64) -> Result<Tensor> {
        let (ta, tb) = (self.value(a), self.value(b));
        if ta.shape() == tb.shape() {
            let data = ta.data().iter().zip(tb.data()).map(|(&x, &y)| f(x, y)).collect();
            return Tensor::new(ta.shape().to_vec(), data);
        }
        let shape = kernels::broadcast_shape(op, ta.shape(), tb.shape())?;
        let ia = kernels::broadcast_index(ta.shape(), &shape);
        let ib = kernels::broadcast_index(tb.shape(), &shape);
        let data = ia
            .iter()
            .zip(&ib)
            .map(|(&i, &j)| f(ta.data()[i], tb.data()[j]))
            .collect();
        Tensor::new(shape, data)
    }

    // ---- reverse pass ------------------------------------------------------

    /// Accumulates `d loss / d leaf` into every leaf that requires a gradient.
    pub fn backward(&mut self, loss: Var) -> Result<()> {
        let lt = self.value(loss);
        if lt.numel() != 1 {
            return Err(Error::NotScalar(lt.shape().to_vec()));
        }
        if !self.nodes[loss.0].requires_grad {
            return Ok(());
        }
        let mut grads: Vec<Option<Vec<f64>>> = vec![None; loss.0 + 1];
        grads[loss.0] = Some(vec![1.0]);
        let mut leaf_grads: Vec<(usize, Vec<f64>)> = Vec::new();

        for id in (0..=loss.0).rev() {
            let Some(g) = grads[id].take() else { continue };
            let node = &self.nodes[id];
            if !node.requires_grad {
                continue;
            }
            match &node.op {
                Op::Leaf => leaf_grads.push((id, g)),
                op => self.backprop_op(op, &node.value, g, &mut grads),
            }
        }

        for (id, g) in leaf_grads {
            let node = &mut self.nodes[id];
            match &mut node.grad {
                Some(acc) => acc.data_mut().iter_mut().zip(&g).for_each(|(a, b)| *a += b),
                slot @ None => *slot = Some(Tensor::new(node.value.shape().to_vec(), g)?),
            }
        }
        Ok(())
    }

    fn tracked(&self, v: Var) -> bool {
        self.nodes[v.0].requires_grad
    }

    fn backprop_op(&self, op: &Op, out: &Tensor, g: Vec<f64>, grads: &mut [Option<Vec<f64>>]) {
        match *op {
            Op::Leaf => unreachable!("leaves are handled by the caller"),
            Op::MatMul(a, b) => {
                let (ta, tb) = (self.value(a), self.value(b));
                let (m, k, n) = (ta.shape()[0], ta.shape()[1], tb.shape()[1]);
                let gm = MatRef::new(&g, m, n);
                if self.tracked(a) {
                    let mut ga = vec![0.0; m * k];
                    kernels::gemm(gm, MatRef::new(tb.data(), k, n).t(), &mut ga, 0.0);
                    accumulate(grads, a, ga);
                }
                if self.tracked(b) {
                    let mut gb = vec![0.0; k * n];
                    kernels::gemm(MatRef::new(ta.data(), m, k).t(), gm, &mut gb, 0.0);
                    accumulate(grads, b, gb);
                }
            }
            Op::Linear { x, w, b } => {
                let (tx, tw) = (self.value(x), self.value(w));
                let (rows, in_dim, out_dim) = (tx.shape()[0], tx.shape()[1], tw.shape()[0]);
                let gm = MatRef::new(&g, rows, out_dim);
                if self.tracked(x) {
                    let mut gx = vec![0.0; rows * in_dim];
                    kernels::gemm(gm, MatRef::new(tw.data(), out_dim, in_dim), &mut gx, 0.0);
                    accumulate(grads, x, gx);
                }
                if self.tracked(w) {
                    let mut gw = vec![0.0; out_dim * in_dim];
                    kernels::gemm(gm.t(), MatRef::new(tx.data(), rows, in_dim), &mut gw, 0.0);
                    accumulate(grads, w, gw);
                }
                if self.tracked(b) {
                    let mut gb = vec![0.0; out_dim];
                    for r in 0..rows {
                        for (acc, v) in gb.iter_mut().zip(&g[r * out_dim..(r + 1) * out_dim]) {
                            *acc += v;
                        }
                    }
                    accumulate(grads, b, gb);
                }
            }
            Op::Add(a, b) => {
                self.unbroadcast(grads, a, out.shape(), &g, |_| 1.0);
                self.unbroadcast(grads, b, out.shape(), &g, |_| 1.0);
            }
            Op::Sub(a, b) => {
                self.unbroadcast(grads, a, out.shape(), &g, |_| 1.0);
                self.unbroadcast(grads, b, out.shape(), &g, |_| -1.0);
            }
            Op::Mul(a, b) => {
                let (ta, tb) = (self.value(a), self.value(b));
                let ib = kernels::broadcast_index(tb.shape(), out.shape());
                let ia = kernels::broadcast_index(ta.shape(), out.shape());
                self.unbroadcast(grads, a, out.shape(), &g, |k| tb.data()[ib[k]]);
                self.unbroadcast(grads, b, out.shape(), &g, |k| ta.data()[ia[k]]);
            }
            Op::Scale(a, c) => {
                if self.tracked(a) {
                    accumulate(grads, a, g.iter().map(|v| v * c).collect());
                }
            }
            Op::AddScalar(a) => {
                if self.tracked(a) {
                    accumulate(grads, a, g);
                }
            }
            Op::Relu(a) => {
                if self.tracked(a) {
                    let ga = g
                        .iter()
                        .zip(out.data())
                        .map(|(gv, &o)| if o > 0.0 { *gv } else { 0.0 })
                        .collect();
                    accumulate(grads, a, ga);
                }
            }
            Op::LeakyRelu(a, slope) => {
                if self.tracked(a) {
                    let ga = g
                        .iter()
                        .zip(self.value(a).data())
                        .map(|(gv, &x)| if x > 0.0 { *gv } else { slope * gv })
                        .collect();
                    accumulate(grads, a, ga);
                }
            }
            Op::Square(a) => {
                if self.tracked(a) {
                    let ga = g
                        .iter()
                        .zip(self.value(a).data())
                        .map(|(gv, &x)| 2.0 * x * gv)
                        .collect();
                    accumulate(grads, a, ga);
                }
            }
            Op::Sum(a, ref axes) => {
                if self.tracked(a) {
                    accumulate(grads, a, self.expand_reduced(a, axes, &g, 1.0));
                }
            }
            Op::Mean(a, ref axes, count) => {
                if self.tracked(a) {
                    accumulate(grads, a, self.expand_reduced(a, axes, &g, 1.0 / count as f64));
                }
            }
            Op::Concat(ref inputs) => {
                let total = *out.shape().last().expect("concat output has an axis");
                let rows = out.numel() / total.max(1);
                let mut offset = 0;
                for &v in inputs {
                    let w = *self.value(v).shape().last().expect("concat input has an axis");
                    if self.tracked(v) {
                        let mut gv = Vec::with_capacity(rows * w);
                        for r in 0..rows {
                            gv.extend_from_slice(&g[r * total + offset..r * total + offset + w]);
                        }
                        accumulate(grads, v, gv);
                    }
                    offset += w;
                }
            }
            Op::Slice { input, axis, start } => {
                if self.tracked(input) {
                    let s = self.value(input).shape();
                    let outer: usize = s[..axis].iter().product();
                    let inner: usize = s[axis + 1..].iter().product();
                    let (dim, len) = (s[axis], out.shape()[axis]);
                    let mut gi = vec![0.0; self.value(input).numel()];
                    for o in 0..outer {
                        let dst = o * dim * inner + start * inner;
                        let src = o * len * inner;
                        gi[dst..dst + len * inner].copy_from_slice(&g[src..src + len * inner]);
                    }
                    accumulate(grads, input, gi);
                }
            }
        }
    }

    /// Reduces an output-shaped gradient (times a per-element factor) onto
    /// the possibly-broadcast operand `v`.
    fn unbroadcast(
        &self,
        grads: &mut [Option<Vec<f64>>],
        v: Var,
        out_shape: &[usize],
        g: &[f64],
        factor: impl Fn(usize) -> f64,
    ) {
        if !self.tracked(v) {
            return;
        }
        let src = self.value(v).shape();
        if src == out_shape {
            accumulate(grads, v, g.iter().enumerate().map(|(k, gv)| gv * factor(k)).collect());
            return;
        }
        let idx = kernels::broadcast_index(src, out_shape);
        let mut gv = vec![0.0; self.value(v).numel()];
        for (k, (&i, gk)) in idx.iter().zip(g).enumerate() {
            gv[i] += gk * factor(k);
        }
        accumulate(grads, v, gv);
    }

    fn expand_reduced(&self, a: Var, axes: &[usize], g: &[f64], factor: f64) -> Vec<f64> {
        let shape = self.value(a).shape();
        let kept: Vec<usize> = shape
            .iter()
            .enumerate()
            .map(|(i, &d)| if axes.contains(&i) { 1 } else { d })
            .collect();
        kernels::broadcast_index(&kept, shape)
            .into_iter()
            .map(|i| g[i] * factor)
            .collect()
    }
}

fn accumulate(grads: &mut [Option<Vec<f64>>], v: Var, g: Vec<f64>) {
    match &mut grads[v.0] {
        Some(acc) => acc.iter_mut().zip(&g).for_each(|(a, b)| *a += b),
        slot @ None => *slot = Some(g),
    }
}

fn op_name(op: &Op) -> &'static str {
    match op {
        Op::Leaf => "leaf",
        Op::MatMul(..) => "matmul",
        Op::Linear { .. } => "linear",
        Op::Add(..) => "add",
        Op::Sub(..) => "sub",
        Op::Mul(..) => "mul",
        Op::Scale(..) => "scale",
        Op::AddScalar(..) => "add_scalar",
        Op::Relu(..) => "relu",
        Op::LeakyRelu(..) => "leaky_relu",
        Op::Square(..) => "square",
        Op::Sum(..) => "sum",
        Op::Mean(..) => "mean",
        Op::Concat(..) => "concat",
        Op::Slice { .. } => "slice",
    }
}
