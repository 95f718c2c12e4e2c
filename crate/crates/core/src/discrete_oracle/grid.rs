//! Sinkhorn on product grids with the cost `|x - y|^2 / 2`.
//!
//! The Gibbs kernel factorizes over axes, so each log-sum-exp over the
//! `k^D` target points is done one axis at a time: `O(D k^(D+1))` per
//! update instead of `O(k^(2D))`.

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use super::{check_weights, log_weights};
use crate::autodiff::Tensor;
use crate::error::{Error, Result};
use crate::gaussian_oracle::GaussianDist;

/// Cartesian product of 1-D axes; points are enumerated row-major (last
/// axis fastest).
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TensorGrid {
    pub axes: Vec<Vec<f64>>,
}

impl TensorGrid {
    pub fn new(axes: Vec<Vec<f64>>) -> Result<Self> {
        if axes.is_empty() || axes.iter().any(|a| a.is_empty()) {
            return Err(Error::Empty("tensor grid axes"));
        }
        Ok(Self { axes })
    }

    /// `k` equally spaced points on `[lo_a, hi_a]` per axis.
    pub fn uniform(bounds: &[(f64, f64)], k: usize) -> Result<Self> {
        if k < 2 {
            return Err(Error::config("a uniform grid needs at least 2 points per axis"));
        }
        Self::new(
            bounds
                .iter()
                .map(|&(lo, hi)| (0..k).map(|i| lo + (hi - lo) * i as f64 / (k - 1) as f64).collect())
                .collect(),
        )
    }

    pub fn dim(&self) -> usize {
        self.axes.len()
    }

    pub fn shape(&self) -> Vec<usize> {
        self.axes.iter().map(Vec::len).collect()
    }

    pub fn len(&self) -> usize {
        self.axes.iter().map(Vec::len).product()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Coordinates of point `idx`.
    pub fn point(&self, mut idx: usize, out: &mut [f64]) {
        for a in (0..self.dim()).rev() {
            let k = self.axes[a].len();
            out[a] = self.axes[a][idx % k];
            idx /= k;
        }
    }

    pub fn points(&self) -> Tensor {
        let d = self.dim();
        let mut data = vec![0.0; self.len() * d];
        for (i, chunk) in data.chunks_mut(d).enumerate() {
            self.point(i, chunk);
        }
        Tensor::new(vec![self.len(), d], data).expect("len * dim values")
    }

    /// Normalized weights proportional to `exp(log_density(x))`.
    pub fn weights(&self, log_density: impl Fn(&[f64]) -> f64) -> Vec<f64> {
        let d = self.dim();
        let mut x = vec![0.0; d];
        let logs: Vec<f64> = (0..self.len())
            .map(|i| {
                self.point(i, &mut x);
                log_density(&x)
            })
            .collect();
        let mx = logs.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let w: Vec<f64> = logs.iter().map(|l| (l - mx).exp()).collect();
        let s: f64 = w.iter().sum();
        w.into_iter().map(|v| v / s).collect()
    }

    /// Discretized Gaussian density.
    pub fn gaussian_weights(&self, g: &GaussianDist) -> Result<Vec<f64>> {
        if g.dim() != self.dim() {
            return Err(Error::shape("gaussian_weights", &[g.dim()], &[self.dim()]));
        }
        let prec = g
            .cov()
            .clone()
            .try_inverse()
            .ok_or_else(|| Error::Numerical("gaussian_weights: singular covariance".into()))?;
        let mean = g.mean().clone();
        Ok(self.weights(|x| {
            let d = nalgebra::DVector::from_fn(x.len(), |i, _| x[i] - mean[i]);
            -0.5 * (d.transpose() * &prec * &d)[(0, 0)]
        }))
    }
}

/// Per-axis `c(i, j) / eps` from `from` points to `to` points.
fn axis_costs(from: &TensorGrid, to: &TensorGrid, eps: f64) -> Vec<Vec<f64>> {
    from.axes
        .iter()
        .zip(&to.axes)
        .map(|(xs, ys)| {
            xs.iter()
                .flat_map(|x| ys.iter().map(move |y| 0.5 * (x - y) * (x - y) / eps))
                .collect()
        })
        .collect()
}

/// `out(i) = log sum_j exp(h(j) - sum_a c_a(i_a, j_a))` evaluated one axis
/// at a time. `h` lives on the `to` grid, `out` on the `from` grid.
fn separable_lse(h: &[f64], from: &[usize], to: &[usize], costs: &[Vec<f64>]) -> Vec<f64> {
    let mut shape = to.to_vec();
    let mut cur = h.to_vec();
    for a in 0..shape.len() {
        let (kx, ky) = (from[a], to[a]);
        let outer: usize = shape[..a].iter().product();
        let inner: usize = shape[a + 1..].iter().product();
        let c = &costs[a];
        let mut next = vec![0.0; outer * kx * inner];
        let mut col = vec![0.0; ky];
        for o in 0..outer {
            for r in 0..inner {
                for (j, v) in col.iter_mut().enumerate() {
                    *v = cur[(o * ky + j) * inner + r];
                }
                for i in 0..kx {
                    let ci = &c[i * ky..(i + 1) * ky];
                    let mut mx = f64::NEG_INFINITY;
                    for j in 0..ky {
                        mx = mx.max(col[j] - ci[j]);
                    }
                    let val = if mx == f64::NEG_INFINITY {
                        f64::NEG_INFINITY
                    } else {
                        let s: f64 = (0..ky).map(|j| (col[j] - ci[j] - mx).exp()).sum();
                        mx + s.ln()
                    };
                    next[(o * kx + i) * inner + r] = val;
                }
            }
        }
        shape[a] = kx;
        cur = next;
    }
    cur
}

/// Result of [`sinkhorn_grid`]; the plan itself is never materialized.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GridCoupling {
    pub xs: TensorGrid,
    pub ys: TensorGrid,
    pub a: Vec<f64>,
    pub b: Vec<f64>,
    pub epsilon: f64,
    pub f: Vec<f64>,
    pub g: Vec<f64>,
    pub row_residual: f64,
    pub col_residual: f64,
    pub iterations: usize,
    pub converged: bool,
}

impl GridCoupling {
    pub fn residual(&self) -> f64 {
        self.row_residual.max(self.col_residual)
    }

    /// Calls `visit(i, j, P_ij)` for every pair with positive weights.
    fn for_each_entry(&self, mut visit: impl FnMut(usize, usize, f64)) {
        let d = self.xs.dim();
        let (la, lb) = (log_weights(&self.a), log_weights(&self.b));
        let ys = self.ys.points();
        let mut x = vec![0.0; d];
        let eps = self.epsilon;
        let gy: Vec<f64> = (0..self.g.len()).map(|j| self.g[j] / eps + lb[j]).collect();
        for (i, &lai) in la.iter().enumerate() {
            if self.a[i] <= 0.0 {
                continue;
            }
            self.xs.point(i, &mut x);
            let fi = self.f[i] / eps + lai;
            for (j, y) in ys.data().chunks(d).enumerate() {
                if gy[j] == f64::NEG_INFINITY {
                    continue;
                }
                let c: f64 = x.iter().zip(y).map(|(p, q)| (p - q) * (p - q)).sum::<f64>() * 0.5 / eps;
                visit(i, j, (fi + gy[j] - c).exp());
            }
        }
    }

    /// Cross-covariance `E[(x - xbar)(y - ybar)^T]` under the plan.
    pub fn cross_covariance(&self) -> DMatrix<f64> {
        let d = self.xs.dim();
        let xs = self.xs.points();
        let ys = self.ys.points();
        let mut mass = 0.0;
        let mut ex = vec![0.0; d];
        let mut ey = vec![0.0; d];
        let mut exy = DMatrix::zeros(d, d);
        // per source point: mass and y-moment of its row
        let mut row = (usize::MAX, 0.0, vec![0.0; d]);
        let flush = |row: &mut (usize, f64, Vec<f64>), ex: &mut Vec<f64>, exy: &mut DMatrix<f64>, mass: &mut f64| {
            if row.0 == usize::MAX {
                return;
            }
            let x = xs.row(row.0);
            *mass += row.1;
            for k in 0..d {
                ex[k] += row.1 * x[k];
                for l in 0..d {
                    exy[(k, l)] += x[k] * row.2[l];
                }
            }
        };
        self.for_each_entry(|i, j, p| {
            if i != row.0 {
                flush(&mut row, &mut ex, &mut exy, &mut mass);
                row = (i, 0.0, vec![0.0; d]);
            }
            row.1 += p;
            let y = ys.row(j);
            for l in 0..d {
                row.2[l] += p * y[l];
                ey[l] += p * y[l];
            }
        });
        flush(&mut row, &mut ex, &mut exy, &mut mass);
        DMatrix::from_fn(d, d, |k, l| exy[(k, l)] / mass - ex[k] * ey[l] / (mass * mass))
    }

    /// Dense plan `[n, m]`; for small grids.
    pub fn dense_plan(&self) -> Tensor {
        let (n, m) = (self.a.len(), self.b.len());
        let mut plan = vec![0.0; n * m];
        self.for_each_entry(|i, j, p| plan[i * m + j] = p);
        Tensor::new(vec![n, m], plan).expect("n * m entries")
    }
}

/// Log-domain Sinkhorn between weights `a` on `xs` and `b` on `ys` with cost
/// `|x - y|^2 / 2`. Same stopping rule and potentials as
/// [`sinkhorn`](super::sinkhorn).
pub fn sinkhorn_grid(
    xs: &TensorGrid,
    a: &[f64],
    ys: &TensorGrid,
    b: &[f64],
    epsilon: f64,
    tol: f64,
    max_iter: usize,
) -> Result<GridCoupling> {
    if xs.dim() != ys.dim() {
        return Err(Error::shape("sinkhorn_grid", &xs.shape(), &ys.shape()));
    }
    if a.len() != xs.len() || b.len() != ys.len() {
        return Err(Error::shape("sinkhorn_grid", &[a.len(), b.len()], &[xs.len(), ys.len()]));
    }
    check_weights("a", a)?;
    check_weights("b", b)?;
    if !(epsilon > 0.0 && epsilon.is_finite()) || !(tol > 0.0) {
        return Err(Error::config(format!("need epsilon > 0 and tol > 0, got {epsilon} and {tol}")));
    }
    let eps = epsilon;
    let (sx, sy) = (xs.shape(), ys.shape());
    let c_xy = axis_costs(xs, ys, eps);
    let c_yx = axis_costs(ys, xs, eps);
    let (la, lb) = (log_weights(a), log_weights(b));

    let update_f = |g: &[f64]| -> Vec<f64> {
        let h: Vec<f64> = g.iter().zip(&lb).map(|(g, l)| g / eps + l).collect();
        separable_lse(&h, &sx, &sy, &c_xy).into_iter().map(|v| -eps * v).collect()
    };
    let update_g = |f: &[f64]| -> Vec<f64> {
        let h: Vec<f64> = f.iter().zip(&la).map(|(f, l)| f / eps + l).collect();
        separable_lse(&h, &sy, &sx, &c_yx).into_iter().map(|v| -eps * v).collect()
    };
    let residual = |w: &[f64], old: &[f64], new: &[f64]| -> f64 {
        (0..w.len())
            .filter(|&i| w[i] > 0.0)
            .map(|i| (w[i] * (((old[i] - new[i]) / eps).exp() - 1.0)).abs())
            .sum()
    };

    let mut f = update_f(&vec![0.0; b.len()]);
    let mut g = vec![0.0; b.len()];
    let mut iterations = 0;
    let mut row_residual = f64::INFINITY;
    while iterations < max_iter {
        iterations += 1;
        g = update_g(&f);
        let next_f = update_f(&g);
        row_residual = residual(a, &f, &next_f);
        if row_residual <= tol {
            break;
        }
        f = next_f;
    }
    if iterations == 0 {
        g = update_g(&f);
        row_residual = residual(a, &f, &update_f(&g));
    }
    let col_residual = residual(b, &g, &update_g(&f));
    Ok(GridCoupling {
        xs: xs.clone(),
        ys: ys.clone(),
        a: a.to_vec(),
        b: b.to_vec(),
        epsilon,
        f,
        g,
        row_residual,
        col_residual,
        iterations,
        converged: row_residual.max(col_residual) <= tol,
    })
}

/// Sinkhorn cross-covariance between two Gaussians discretized on
/// `k` points per axis over `+-span` standard deviations around each mean.
pub fn gaussian_grid_cross_covariance(
    p0: &GaussianDist,
    p1: &GaussianDist,
    epsilon: f64,
    k: usize,
    span: f64,
    tol: f64,
    max_iter: usize,
) -> Result<(DMatrix<f64>, GridCoupling)> {
    let bounds = |g: &GaussianDist| -> Vec<(f64, f64)> {
        (0..g.dim())
            .map(|i| {
                let s = g.cov()[(i, i)].sqrt();
                (g.mean()[i] - span * s, g.mean()[i] + span * s)
            })
            .collect()
    };
    let xs = TensorGrid::uniform(&bounds(p0), k)?;
    let ys = TensorGrid::uniform(&bounds(p1), k)?;
    let a = xs.gaussian_weights(p0)?;
    let b = ys.gaussian_weights(p1)?;
    let coupling = sinkhorn_grid(&xs, &a, &ys, &b, epsilon, tol, max_iter)?;
    Ok((coupling.cross_covariance(), coupling))
}
