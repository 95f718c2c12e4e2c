//! Sample moments, BW2-UVP and the energy distance.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::autodiff::Tensor;
use crate::error::{Error, Result};
use crate::gaussian_oracle::{bw2_distance, GaussianDist};
use crate::sde::sha256_hex;

#[derive(Clone, Debug, PartialEq)]
pub struct MomentSummary {
    pub mean: DVector<f64>,
    /// unbiased, exactly symmetric
    pub cov: DMatrix<f64>,
    pub n_samples: usize,
}

impl MomentSummary {
    pub fn gaussian(&self) -> Result<GaussianDist> {
        GaussianDist::new(self.mean.clone(), self.cov.clone())
    }
}

/// Sample mean and `n - 1` covariance of the rows of `samples: [n, D]`.
pub fn empirical_moments(samples: &Tensor) -> Result<MomentSummary> {
    if samples.ndim() != 2 {
        return Err(Error::InvalidShape {
            op: "empirical_moments",
            msg: format!("expected [n, D], got {:?}", samples.shape()),
        });
    }
    let (n, d) = (samples.rows(), samples.cols());
    if n < 2 {
        return Err(Error::config(format!("empirical_moments needs at least 2 samples, got {n}")));
    }
    let mut mean = DVector::zeros(d);
    for i in 0..n {
        for (k, v) in samples.row(i).iter().enumerate() {
            mean[k] += v;
        }
    }
    mean /= n as f64;
    let centered = DMatrix::from_fn(n, d, |i, k| samples.data()[i * d + k] - mean[k]);
    let cov = centered.transpose() * &centered / (n as f64 - 1.0);
    let cov = (&cov + cov.transpose()) * 0.5;
    Ok(MomentSummary {
        mean,
        cov,
        n_samples: n,
    })
}

/// `100 * BW2(N(estimate), reference) / (tr(S_ref) / 2)`, in percent.
pub fn bw2_uvp(estimate: &MomentSummary, reference: &GaussianDist) -> Result<f64> {
    let half_var = 0.5 * reference.cov().trace();
    if !(half_var > 0.0) {
        return Err(Error::config("bw2_uvp: reference covariance has zero trace"));
    }
    Ok(100.0 * bw2_distance(&estimate.gaussian()?, reference)? / half_var)
}

pub fn bw2_uvp_samples(samples: &Tensor, reference: &GaussianDist) -> Result<f64> {
    bw2_uvp(&empirical_moments(samples)?, reference)
}

/// `2 E|A - B| - E|A - A'| - E|B - B'|` with U-statistic within-set terms
/// (zero for a single sample).
///
/// The two sets are put in a canonical order before summing, so
/// `energy_distance(a, b) == energy_distance(b, a)` bit for bit.
pub fn energy_distance(a: &Tensor, b: &Tensor) -> Result<f64> {
    if a.ndim() != 2 || b.ndim() != 2 || a.cols() != b.cols() {
        return Err(Error::shape("energy_distance", a.shape(), b.shape()));
    }
    if a.rows() == 0 || b.rows() == 0 {
        return Err(Error::Empty("energy_distance: samples"));
    }
    let key = |t: &Tensor| (t.rows(), t.data().iter().map(|v| v.to_bits()).collect::<Vec<_>>());
    let (a, b) = if key(a) <= key(b) { (a, b) } else { (b, a) };
    let cross = mean_pair_distance(a, b, false);
    Ok(2.0 * cross - mean_pair_distance(a, a, true) - mean_pair_distance(b, b, true))
}

fn mean_pair_distance(a: &Tensor, b: &Tensor, within: bool) -> f64 {
    let (n, m) = (a.rows(), b.rows());
    if within && n < 2 {
        return 0.0;
    }
    let mut total = 0.0;
    for i in 0..n {
        let x = a.row(i);
        let start = if within { i + 1 } else { 0 };
        let mut row = 0.0;
        for j in start..m {
            row += x.iter().zip(b.row(j)).map(|(p, q)| (p - q) * (p - q)).sum::<f64>().sqrt();
        }
        total += row;
    }
    if within {
        // each unordered pair once
        total / (n * (n - 1) / 2) as f64
    } else {
        total / (n * m) as f64
    }
}

/// One line of a metric report.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MetricRecord {
    pub metric: String,
    pub value: f64,
    pub n_samples: usize,
    pub seed: u64,
    pub config_hash: String,
}

/// SHA-256 of the compact JSON form of a configuration.
pub fn config_hash(config: &serde_json::Value) -> String {
    sha256_hex(config.to_string().as_bytes())
}
