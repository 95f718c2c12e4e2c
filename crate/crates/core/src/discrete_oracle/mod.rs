//! Log-domain Sinkhorn for discrete entropic OT.
//!
//! Solves `min <M, P> - epsilon H(P)` over couplings of `a` and `b`, with
//! `H(P) = -sum P log P`. Dense problems use [`sinkhorn`]; product grids
//! with the quadratic cost use the separable solver in [`grid`].

pub mod grid;

use std::cmp::Ordering;

use serde::{Deserialize, Serialize};

use crate::autodiff::Tensor;
use crate::error::{Error, Result};

pub use grid::{gaussian_grid_cross_covariance, sinkhorn_grid, GridCoupling, TensorGrid};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DiscreteEotProblem {
    /// `[n, m]`
    pub cost: Tensor,
    pub a: Vec<f64>,
    pub b: Vec<f64>,
    pub epsilon: f64,
}

impl DiscreteEotProblem {
    pub fn new(cost: Tensor, a: Vec<f64>, b: Vec<f64>, epsilon: f64) -> Result<Self> {
        let p = Self { cost, a, b, epsilon };
        p.validate()?;
        Ok(p)
    }

    /// Cost `|x_i - y_j|^2 / 2` between the rows of `xs: [n, D]` and `ys: [m, D]`.
    pub fn from_points(xs: &Tensor, ys: &Tensor, a: Vec<f64>, b: Vec<f64>, epsilon: f64) -> Result<Self> {
        if xs.ndim() != 2 || ys.ndim() != 2 || xs.cols() != ys.cols() {
            return Err(Error::shape("from_points", xs.shape(), ys.shape()));
        }
        let (n, m) = (xs.rows(), ys.rows());
        let mut cost = Vec::with_capacity(n * m);
        for i in 0..n {
            for j in 0..m {
                let d2: f64 = xs.row(i).iter().zip(ys.row(j)).map(|(p, q)| (p - q) * (p - q)).sum();
                cost.push(0.5 * d2);
            }
        }
        Self::new(Tensor::new(vec![n, m], cost)?, a, b, epsilon)
    }

    pub fn n(&self) -> usize {
        self.a.len()
    }

    pub fn m(&self) -> usize {
        self.b.len()
    }

    pub fn validate(&self) -> Result<()> {
        if self.cost.shape() != [self.n(), self.m()] {
            return Err(Error::shape("sinkhorn", self.cost.shape(), &[self.n(), self.m()]));
        }
        if self.n() == 0 || self.m() == 0 {
            return Err(Error::Empty("sinkhorn: marginals"));
        }
        check_weights("a", &self.a)?;
        check_weights("b", &self.b)?;
        if !self.cost.is_finite() {
            return Err(Error::NonFinite {
                op: "sinkhorn",
                context: Some("cost matrix".into()),
            });
        }
        if !(self.epsilon > 0.0 && self.epsilon.is_finite()) {
            return Err(Error::config(format!("epsilon must be positive, got {}", self.epsilon)));
        }
        Ok(())
    }

    /// `(b, a, M^T)`.
    pub fn transposed(&self) -> Self {
        Self {
            cost: transpose(&self.cost),
            a: self.b.clone(),
            b: self.a.clone(),
            epsilon: self.epsilon,
        }
    }
}

pub(crate) fn check_weights(name: &str, w: &[f64]) -> Result<()> {
    if w.iter().any(|v| !(v.is_finite() && *v >= 0.0)) {
        return Err(Error::config(format!("weights {name} must be finite and nonnegative")));
    }
    let s: f64 = w.iter().sum();
    if (s - 1.0).abs() > 1e-12 {
        return Err(Error::config(format!("weights {name} sum to {s}, not 1")));
    }
    Ok(())
}

fn transpose(t: &Tensor) -> Tensor {
    let (n, m) = (t.rows(), t.cols());
    let data = (0..m).flat_map(|j| (0..n).map(move |i| t.data()[i * m + j])).collect();
    Tensor::new(vec![m, n], data).expect("transpose keeps the element count")
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Coupling {
    /// `[n, m]`
    pub plan: Tensor,
    /// dual potentials: `P_ij = a_i b_j exp((f_i + g_j - M_ij) / eps)`
    pub f: Vec<f64>,
    pub g: Vec<f64>,
    /// L1 distance of the row sums to `a`
    pub row_residual: f64,
    /// L1 distance of the column sums to `b`
    pub col_residual: f64,
    pub iterations: usize,
    pub converged: bool,
}

impl Coupling {
    pub fn residual(&self) -> f64 {
        self.row_residual.max(self.col_residual)
    }

    /// `-sum P log P` over positive entries.
    pub fn entropy(&self) -> f64 {
        -self.plan.data().iter().filter(|&&p| p > 0.0).map(|p| p * p.ln()).sum::<f64>()
    }

    pub fn transposed(&self) -> Self {
        Self {
            plan: transpose(&self.plan),
            f: self.g.clone(),
            g: self.f.clone(),
            row_residual: self.col_residual,
            col_residual: self.row_residual,
            iterations: self.iterations,
            converged: self.converged,
        }
    }
}

/// `-eps * log sum_j exp(z_j)` written for one row, skipping `-inf` terms.
pub(crate) fn neg_eps_lse(eps: f64, z: impl Iterator<Item = f64> + Clone) -> f64 {
    let mx = z.clone().fold(f64::NEG_INFINITY, f64::max);
    if mx == f64::NEG_INFINITY {
        return f64::INFINITY;
    }
    let s: f64 = z.map(|v| (v - mx).exp()).sum();
    -eps * (mx + s.ln())
}

pub(crate) fn log_weights(w: &[f64]) -> Vec<f64> {
    w.iter().map(|&v| if v > 0.0 { v.ln() } else { f64::NEG_INFINITY }).collect()
}

/// Orders a problem against its transpose; the solver always works on the
/// smaller of the two, so solving the transpose transposes the result
/// exactly.
fn canonical_cmp(p: &DiscreteEotProblem) -> Ordering {
    let t = p.transposed();
    let key = |q: &DiscreteEotProblem| {
        let mut k = vec![q.n() as u64, q.m() as u64];
        k.extend(q.a.iter().chain(&q.b).chain(q.cost.data()).map(|v| v.to_bits()));
        k
    };
    key(p).cmp(&key(&t))
}

/// Alternating log-domain updates of `(f, g)` until the L1 marginal residual
/// is at most `tol` or `max_iter` sweeps ran. A run that stops on
/// `max_iter` is returned with `converged = false`.
pub fn sinkhorn(problem: &DiscreteEotProblem, tol: f64, max_iter: usize) -> Result<Coupling> {
    problem.validate()?;
    if !(tol > 0.0) {
        return Err(Error::config(format!("tol must be positive, got {tol}")));
    }
    if canonical_cmp(problem) == Ordering::Greater {
        return Ok(solve(&problem.transposed(), tol, max_iter).transposed());
    }
    Ok(solve(problem, tol, max_iter))
}

fn solve(p: &DiscreteEotProblem, tol: f64, max_iter: usize) -> Coupling {
    let (n, m, eps) = (p.n(), p.m(), p.epsilon);
    let cost = p.cost.data();
    let (la, lb) = (log_weights(&p.a), log_weights(&p.b));
    let mut f = vec![0.0; n];
    let mut g = vec![0.0; m];

    let update_f = |g: &[f64], f: &mut [f64]| {
        for i in 0..n {
            let row = &cost[i * m..(i + 1) * m];
            f[i] = neg_eps_lse(eps, (0..m).map(|j| (g[j] - row[j]) / eps + lb[j]));
        }
    };
    let update_g = |f: &[f64], g: &mut [f64]| {
        for j in 0..m {
            g[j] = neg_eps_lse(eps, (0..n).map(|i| (f[i] - cost[i * m + j]) / eps + la[i]));
        }
    };

    update_f(&g, &mut f);
    let mut next_f = vec![0.0; n];
    let mut iterations = 0;
    let mut converged = false;
    while iterations < max_iter {
        iterations += 1;
        update_g(&f, &mut g);
        // columns are now exact; row i sums to a_i exp((f_i - f'_i) / eps)
        update_f(&g, &mut next_f);
        let row_res: f64 = (0..n)
            .filter(|&i| p.a[i] > 0.0)
            .map(|i| (p.a[i] * (((f[i] - next_f[i]) / eps).exp() - 1.0)).abs())
            .sum();
        if row_res <= tol {
            converged = true;
            break;
        }
        std::mem::swap(&mut f, &mut next_f);
    }
    // the reported plan uses (f, g) with exact columns
    let mut plan = vec![0.0; n * m];
    for i in 0..n {
        for j in 0..m {
            let lp = (f[i] + g[j] - cost[i * m + j]) / eps + la[i] + lb[j];
            plan[i * m + j] = if lp == f64::NEG_INFINITY { 0.0 } else { lp.exp() };
        }
    }
    let row_residual = (0..n).map(|i| (plan[i * m..(i + 1) * m].iter().sum::<f64>() - p.a[i]).abs()).sum();
    let col_residual = (0..m).map(|j| ((0..n).map(|i| plan[i * m + j]).sum::<f64>() - p.b[j]).abs()).sum();
    Coupling {
        plan: Tensor::new(vec![n, m], plan).expect("n * m entries"),
        f,
        g,
        row_residual,
        col_residual,
        iterations,
        converged: converged && f64::max(row_residual, col_residual) <= tol,
    }
}

/// `sum_ij P_ij (x_i - xbar)(y_j - ybar)^T` with `P`-weighted means, `[D, D]`
/// row-major.
pub fn coupling_cross_covariance(p: &Coupling, xs: &Tensor, ys: &Tensor) -> Result<Tensor> {
    let (n, m) = (p.plan.rows(), p.plan.cols());
    if xs.rows() != n || ys.rows() != m || xs.cols() != ys.cols() {
        return Err(Error::shape("coupling_cross_covariance", xs.shape(), ys.shape()));
    }
    let d = xs.cols();
    let plan = p.plan.data();
    let row_mass: Vec<f64> = (0..n).map(|i| plan[i * m..(i + 1) * m].iter().sum()).collect();
    let col_mass: Vec<f64> = (0..m).map(|j| (0..n).map(|i| plan[i * m + j]).sum()).collect();
    let total: f64 = row_mass.iter().sum();
    let mut xbar = vec![0.0; d];
    let mut ybar = vec![0.0; d];
    for k in 0..d {
        xbar[k] = (0..n).map(|i| row_mass[i] * xs.row(i)[k]).sum::<f64>() / total;
        ybar[k] = (0..m).map(|j| col_mass[j] * ys.row(j)[k]).sum::<f64>() / total;
    }
    let mut out = vec![0.0; d * d];
    for i in 0..n {
        // sum_j P_ij (y_j - ybar)
        let mut py = vec![0.0; d];
        for j in 0..m {
            let w = plan[i * m + j];
            for (l, v) in py.iter_mut().enumerate() {
                *v += w * (ys.row(j)[l] - ybar[l]);
            }
        }
        for k in 0..d {
            let dx = xs.row(i)[k] - xbar[k];
            for l in 0..d {
                out[k * d + l] += dx * py[l];
            }
        }
    }
    Tensor::new(vec![d, d], out)
}
