//! Closed-form entropic OT between Gaussians, Brownian-bridge marginals and
//! the Bures-Wasserstein distance.
//!
//! Convention: the plan minimizes `E ||x - y||^2 / 2 - epsilon H(pi)`, which
//! is the endpoint law of the Schrodinger bridge with prior
//! `dX = sqrt(epsilon) dW`. For this cost the cross-covariance is
//!
//! ```text
//! C = 1/2 S0^{1/2} (4 S0^{1/2} S1 S0^{1/2} + eps^2 I)^{1/2} S0^{-1/2} - eps/2 I
//! ```
//!
//! which the Sinkhorn tests in `discrete_oracle` confirm (1-D, unit
//! variances, `eps = 1`: `C = (sqrt 5 - 1) / 2`).

mod linalg;

use std::path::Path;

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::autodiff::Tensor;
use crate::error::{Error, Result};

pub use linalg::{min_eigenvalue, psd_cholesky, sym_inv_sqrt, sym_sqrt};

/// `N(mean, cov)` with a symmetric PSD covariance.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawGaussian", into = "RawGaussian")]
pub struct GaussianDist {
    mean: DVector<f64>,
    cov: DMatrix<f64>,
}

#[derive(Serialize, Deserialize)]
struct RawGaussian {
    mean: Vec<f64>,
    /// row-major rows
    cov: Vec<Vec<f64>>,
}

impl TryFrom<RawGaussian> for GaussianDist {
    type Error = Error;

    fn try_from(raw: RawGaussian) -> Result<Self> {
        let cov = matrix_from_rows(&raw.cov)?;
        GaussianDist::new(DVector::from_vec(raw.mean), cov)
    }
}

impl From<GaussianDist> for RawGaussian {
    fn from(g: GaussianDist) -> Self {
        RawGaussian {
            mean: g.mean.iter().copied().collect(),
            cov: matrix_to_rows(&g.cov),
        }
    }
}

pub fn matrix_from_rows(rows: &[Vec<f64>]) -> Result<DMatrix<f64>> {
    let n = rows.len();
    let m = rows.first().map_or(0, |r| r.len());
    if rows.iter().any(|r| r.len() != m) {
        return Err(Error::Format("ragged matrix rows".into()));
    }
    Ok(DMatrix::from_fn(n, m, |i, j| rows[i][j]))
}

pub fn matrix_to_rows(m: &DMatrix<f64>) -> Vec<Vec<f64>> {
    (0..m.nrows()).map(|i| m.row(i).iter().copied().collect()).collect()
}

impl GaussianDist {
    /// Validates symmetry (to 1e-12 relative) and PSD-ness (eigenvalues
    /// above `-1e-10`); the stored covariance is exactly symmetric.
    pub fn new(mean: DVector<f64>, cov: DMatrix<f64>) -> Result<Self> {
        let d = mean.len();
        if cov.nrows() != d || cov.ncols() != d {
            return Err(Error::shape("gaussian", &[d], &[cov.nrows(), cov.ncols()]));
        }
        if d == 0 {
            return Err(Error::Empty("gaussian: dimension"));
        }
        if mean.iter().chain(cov.iter()).any(|v| !v.is_finite()) {
            return Err(Error::NonFinite {
                op: "gaussian",
                context: Some("mean or covariance".into()),
            });
        }
        let asym = (&cov - cov.transpose()).amax();
        if asym > 1e-12 * cov.amax().max(1.0) {
            return Err(Error::Numerical(format!("covariance is not symmetric (max asymmetry {asym})")));
        }
        let cov = linalg::symmetrize(&cov);
        let scale = cov.amax().max(1.0);
        let min = min_eigenvalue(&cov);
        if min < -linalg::NEG_TOL * scale {
            return Err(Error::Numerical(format!("covariance is not PSD (eigenvalue {min})")));
        }
        Ok(Self { mean, cov })
    }

    pub fn centered(cov: DMatrix<f64>) -> Result<Self> {
        Self::new(DVector::zeros(cov.nrows()), cov)
    }

    pub fn standard(dim: usize) -> Self {
        Self {
            mean: DVector::zeros(dim),
            cov: DMatrix::identity(dim, dim),
        }
    }

    pub fn dim(&self) -> usize {
        self.mean.len()
    }

    pub fn mean(&self) -> &DVector<f64> {
        &self.mean
    }

    pub fn cov(&self) -> &DMatrix<f64> {
        &self.cov
    }

    pub fn sampler(&self) -> Result<GaussianSampler> {
        Ok(GaussianSampler {
            mean: self.mean.clone(),
            chol: psd_cholesky(&self.cov)?,
        })
    }

    pub fn sample<R: Rng + ?Sized>(&self, n: usize, rng: &mut R) -> Result<Tensor> {
        Ok(self.sampler()?.sample(n, rng))
    }
}

/// Factored Gaussian ready for repeated sampling.
#[derive(Clone, Debug)]
pub struct GaussianSampler {
    mean: DVector<f64>,
    chol: DMatrix<f64>,
}

impl GaussianSampler {
    pub fn dim(&self) -> usize {
        self.mean.len()
    }

    /// `n` rows `mean + L z`; draws `z` row by row so each sample consumes
    /// `D` normals in order.
    pub fn sample<R: Rng + ?Sized>(&self, n: usize, rng: &mut R) -> Tensor {
        let d = self.dim();
        let mut out = Vec::with_capacity(n * d);
        let mut z = vec![0.0; d];
        for _ in 0..n {
            z.iter_mut().for_each(|v| *v = rng.sample(StandardNormal));
            for i in 0..d {
                let mut s = self.mean[i];
                for (k, zk) in z.iter().enumerate().take(i + 1) {
                    s += self.chol[(i, k)] * zk;
                }
                out.push(s);
            }
        }
        Tensor::new(vec![n, d], out).expect("n * d values")
    }
}

/// Entropic OT plan between two Gaussians: a Gaussian on `R^D x R^D` with
/// covariance `[[S0, C], [C^T, S1]]`.
#[derive(Clone, Debug, PartialEq)]
pub struct GaussianEotPlan {
    pub p0: GaussianDist,
    pub p1: GaussianDist,
    pub cross: DMatrix<f64>,
    pub epsilon: f64,
}

impl GaussianEotPlan {
    pub fn dim(&self) -> usize {
        self.p0.dim()
    }

    /// The plan as a `2D`-dimensional Gaussian over `(x, y)`.
    pub fn joint(&self) -> Result<GaussianDist> {
        let d = self.dim();
        let mut mean = DVector::zeros(2 * d);
        mean.rows_mut(0, d).copy_from(self.p0.mean());
        mean.rows_mut(d, d).copy_from(self.p1.mean());
        let mut cov = DMatrix::zeros(2 * d, 2 * d);
        cov.view_mut((0, 0), (d, d)).copy_from(self.p0.cov());
        cov.view_mut((d, d), (d, d)).copy_from(self.p1.cov());
        cov.view_mut((0, d), (d, d)).copy_from(&self.cross);
        cov.view_mut((d, 0), (d, d)).copy_from(&self.cross.transpose());
        // C is symmetric only up to rounding
        GaussianDist::new(mean, linalg::symmetrize(&cov))
    }

    /// Law of the bridge at time `t`: mean `(1-t) m0 + t m1`, covariance
    /// `(1-t)^2 S0 + t^2 S1 + t(1-t)(C + C^T) + eps t(1-t) I`.
    pub fn bridge_marginal(&self, t: f64) -> Result<GaussianDist> {
        check_t(t)?;
        let d = self.dim();
        let s = 1.0 - t;
        let mean = self.p0.mean() * s + self.p1.mean() * t;
        let cov = self.p0.cov() * (s * s)
            + self.p1.cov() * (t * t)
            + (&self.cross + self.cross.transpose()) * (t * s)
            + DMatrix::identity(d, d) * (self.epsilon * t * s);
        GaussianDist::new(mean, linalg::symmetrize(&cov))
    }
}

fn check_t(t: f64) -> Result<()> {
    if !(0.0..=1.0).contains(&t) {
        return Err(Error::config(format!("time {t} is outside [0, 1]")));
    }
    Ok(())
}

/// Cross-covariance for given `epsilon` under the convention in the module
/// docs. `S0` must be positive definite.
pub fn eot_cross_covariance(s0: &DMatrix<f64>, s1: &DMatrix<f64>, epsilon: f64) -> Result<DMatrix<f64>> {
    if !(epsilon >= 0.0 && epsilon.is_finite()) {
        return Err(Error::config(format!("epsilon must be finite and >= 0, got {epsilon}")));
    }
    let d = s0.nrows();
    let r = sym_sqrt(s0)?;
    let r_inv = sym_inv_sqrt(s0)?;
    let inner = &r * s1 * &r * 4.0 + DMatrix::identity(d, d) * (epsilon * epsilon);
    let mid = sym_sqrt(&inner)?;
    Ok(&r * mid * r_inv * 0.5 - DMatrix::identity(d, d) * (epsilon / 2.0))
}

pub fn solve_gaussian_eot(p0: &GaussianDist, p1: &GaussianDist, epsilon: f64) -> Result<GaussianEotPlan> {
    if p0.dim() != p1.dim() {
        return Err(Error::shape("solve_gaussian_eot", &[p0.dim()], &[p1.dim()]));
    }
    let cross = eot_cross_covariance(p0.cov(), p1.cov(), epsilon)?;
    let plan = GaussianEotPlan {
        p0: p0.clone(),
        p1: p1.clone(),
        cross,
        epsilon,
    };
    let joint = plan.joint()?;
    let min = min_eigenvalue(joint.cov());
    if min < -1e-8 * joint.cov().amax().max(1.0) {
        return Err(Error::Numerical(format!("assembled plan covariance is not PSD (eigenvalue {min})")));
    }
    Ok(plan)
}

/// i.i.d. pairs `(X, Y)` from the plan, each `[n, D]`.
pub fn sample_plan<R: Rng + ?Sized>(plan: &GaussianEotPlan, n: usize, rng: &mut R) -> Result<(Tensor, Tensor)> {
    let d = plan.dim();
    let xy = plan.joint()?.sample(n, rng)?;
    let mut x = Vec::with_capacity(n * d);
    let mut y = Vec::with_capacity(n * d);
    for i in 0..n {
        let row = xy.row(i);
        x.extend_from_slice(&row[..d]);
        y.extend_from_slice(&row[d..]);
    }
    Ok((Tensor::new(vec![n, d], x)?, Tensor::new(vec![n, d], y)?))
}

/// Samples `(x, y)` from the plan, then `x + t (y - x) + sqrt(eps t (1-t)) z`.
pub fn bridge_marginal_sample<R: Rng + ?Sized>(
    plan: &GaussianEotPlan,
    t: f64,
    n: usize,
    rng: &mut R,
) -> Result<Tensor> {
    check_t(t)?;
    let (x, y) = sample_plan(plan, n, rng)?;
    let sd = (plan.epsilon * t * (1.0 - t)).sqrt();
    let mut out = x.into_data();
    for (o, yv) in out.iter_mut().zip(y.data()) {
        let z: f64 = rng.sample(StandardNormal);
        *o = *o + t * (yv - *o) + sd * z;
    }
    Tensor::new(vec![n, plan.dim()], out)
}

/// Squared 2-Wasserstein distance between Gaussians.
///
/// Computed in both argument orders; a disagreement above `1e-8` (relative
/// to `max(1, value)`) is reported as a numerical failure.
pub fn bw2_distance(g1: &GaussianDist, g2: &GaussianDist) -> Result<f64> {
    if g1.dim() != g2.dim() {
        return Err(Error::shape("bw2_distance", &[g1.dim()], &[g2.dim()]));
    }
    let a = bw2_one_way(g1, g2)?;
    let b = bw2_one_way(g2, g1)?;
    if (a - b).abs() > 1e-8 * a.abs().max(1.0) {
        return Err(Error::Numerical(format!("bw2_distance is asymmetric: {a} vs {b}")));
    }
    Ok((0.5 * (a + b)).max(0.0))
}

fn bw2_one_way(g1: &GaussianDist, g2: &GaussianDist) -> Result<f64> {
    let dm = (g1.mean() - g2.mean()).norm_squared();
    let r = sym_sqrt(g1.cov())?;
    let cross = sym_sqrt(&(&r * g2.cov() * &r))?;
    Ok(dm + g1.cov().trace() + g2.cov().trace() - 2.0 * cross.trace())
}

/// `Q diag(lambda) Q^T` with Haar-random `Q` and `log lambda ~ U[-log 2, log 2]`.
pub fn random_covariance<R: Rng + ?Sized>(dim: usize, rng: &mut R) -> DMatrix<f64> {
    let (q, lambda) = random_spectrum(dim, rng);
    linalg::symmetrize(&(&q * DMatrix::from_diagonal(&lambda) * q.transpose()))
}

/// Haar orthogonal matrix and eigenvalues behind [`random_covariance`].
pub fn random_spectrum<R: Rng + ?Sized>(dim: usize, rng: &mut R) -> (DMatrix<f64>, DVector<f64>) {
    let g = DMatrix::from_fn(dim, dim, |_, _| rng.sample::<f64, _>(StandardNormal));
    let qr = g.qr();
    let mut q = qr.q();
    let r = qr.r();
    // sign fix makes Q Haar distributed
    for j in 0..dim {
        if r[(j, j)] < 0.0 {
            q.column_mut(j).neg_mut();
        }
    }
    let ln2 = std::f64::consts::LN_2;
    let lambda = DVector::from_fn(dim, |_, _| rng.random_range(-ln2..=ln2).exp());
    (q, lambda)
}

/// Portable description of a Gaussian benchmark pair.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GaussianInstance {
    pub dim: usize,
    pub seed: u64,
    pub epsilon: f64,
    /// row-major rows
    pub sigma0: Vec<Vec<f64>>,
    pub sigma1: Vec<Vec<f64>>,
}

impl GaussianInstance {
    pub fn new(p0: &GaussianDist, p1: &GaussianDist, epsilon: f64, seed: u64) -> Self {
        Self {
            dim: p0.dim(),
            seed,
            epsilon,
            sigma0: matrix_to_rows(p0.cov()),
            sigma1: matrix_to_rows(p1.cov()),
        }
    }

    /// Zero-mean marginals.
    pub fn marginals(&self) -> Result<(GaussianDist, GaussianDist)> {
        let p0 = GaussianDist::centered(matrix_from_rows(&self.sigma0)?)?;
        let p1 = GaussianDist::centered(matrix_from_rows(&self.sigma1)?)?;
        if p0.dim() != self.dim || p1.dim() != self.dim {
            return Err(Error::Format(format!("instance declares dim {} but matrices disagree", self.dim)));
        }
        Ok((p0, p1))
    }

    pub fn plan(&self) -> Result<GaussianEotPlan> {
        let (p0, p1) = self.marginals()?;
        solve_gaussian_eot(&p0, &p1, self.epsilon)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        std::fs::write(path, serde_json::to_string_pretty(self)?)?;
        Ok(())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        Ok(serde_json::from_str(&std::fs::read_to_string(path)?)?)
    }
}

#[cfg(test)]
mod tests;
