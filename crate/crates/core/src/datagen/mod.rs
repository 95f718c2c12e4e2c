//! Source and target samplers: toy 2-D distributions and Gaussian
//! benchmark pairs.

use std::f64::consts::{PI, TAU};
use std::io::Write;

use nalgebra::DVector;
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::autodiff::Tensor;
use crate::error::{Error, Result};
use crate::gaussian_oracle::{random_covariance, GaussianDist, GaussianSampler};
use crate::rng::{derive_seed, seeded_rng};

/// Toy distributions in the plane (the Gaussian kind allows any dimension).
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ToyDistribution {
    /// isotropic `N(0, std^2 I)` in `dim` dimensions
    Gaussian {
        #[serde(default = "two")]
        dim: usize,
        #[serde(default = "one")]
        std: f64,
    },
    /// spiral `(s cos s, s sin s) / 7.5` with `s = 1.5 pi (1 + 2u)` plus
    /// `noise * z`, `z` truncated at 6 standard deviations
    SwissRoll {
        #[serde(default = "default_roll_noise")]
        noise: f64,
    },
    /// equal mixture of `N(c_k, std^2 I)`, `c_k` equally spaced on a circle
    EightGaussians {
        #[serde(default = "default_radius")]
        radius: f64,
        #[serde(default = "default_component_std")]
        std: f64,
    },
}

fn two() -> usize {
    2
}
fn one() -> f64 {
    1.0
}
fn default_roll_noise() -> f64 {
    0.1
}
fn default_radius() -> f64 {
    2.0
}
fn default_component_std() -> f64 {
    0.2
}

const ROLL_SCALE: f64 = 7.5;
const TRUNCATION: f64 = 6.0;

impl ToyDistribution {
    pub fn gaussian() -> Self {
        ToyDistribution::Gaussian { dim: 2, std: 1.0 }
    }

    pub fn swiss_roll() -> Self {
        ToyDistribution::SwissRoll {
            noise: default_roll_noise(),
        }
    }

    pub fn eight_gaussians() -> Self {
        ToyDistribution::EightGaussians {
            radius: default_radius(),
            std: default_component_std(),
        }
    }

    pub fn dim(&self) -> usize {
        match self {
            ToyDistribution::Gaussian { dim, .. } => *dim,
            _ => 2,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let ok = match *self {
            ToyDistribution::Gaussian { dim, std } => dim >= 1 && std > 0.0,
            ToyDistribution::SwissRoll { noise } => noise >= 0.0,
            ToyDistribution::EightGaussians { radius, std } => radius > 0.0 && std > 0.0,
        };
        if !ok {
            return Err(Error::config(format!("invalid toy distribution parameters: {self:?}")));
        }
        Ok(())
    }

    /// Mixture centers; empty for the other kinds.
    pub fn centers(&self) -> Vec<[f64; 2]> {
        match *self {
            ToyDistribution::EightGaussians { radius, .. } => (0..8)
                .map(|k| {
                    let a = TAU * k as f64 / 8.0;
                    [radius * a.cos(), radius * a.sin()]
                })
                .collect(),
            _ => Vec::new(),
        }
    }

    /// Every Swiss-roll sample satisfies `|x_i| <= bound`.
    pub fn swiss_roll_bound(noise: f64) -> f64 {
        4.5 * PI / ROLL_SCALE + TRUNCATION * noise
    }

    pub fn sample<R: Rng + ?Sized>(&self, n: usize, rng: &mut R) -> Result<Tensor> {
        self.validate()?;
        if n == 0 {
            return Err(Error::Empty("sample: n"));
        }
        let d = self.dim();
        let mut out = Vec::with_capacity(n * d);
        match *self {
            ToyDistribution::Gaussian { std, .. } => {
                for _ in 0..n * d {
                    out.push(std * rng.sample::<f64, _>(StandardNormal));
                }
            }
            ToyDistribution::SwissRoll { noise } => {
                for _ in 0..n {
                    let s = 1.5 * PI * (1.0 + 2.0 * rng.random::<f64>());
                    out.push(s * s.cos() / ROLL_SCALE + noise * truncated_normal(rng));
                    out.push(s * s.sin() / ROLL_SCALE + noise * truncated_normal(rng));
                }
            }
            ToyDistribution::EightGaussians { std, .. } => {
                let centers = self.centers();
                for _ in 0..n {
                    let c = centers[rng.random_range(0..8)];
                    out.push(c[0] + std * rng.sample::<f64, _>(StandardNormal));
                    out.push(c[1] + std * rng.sample::<f64, _>(StandardNormal));
                }
            }
        }
        Tensor::new(vec![n, d], out)
    }
}

fn truncated_normal<R: Rng + ?Sized>(rng: &mut R) -> f64 {
    loop {
        let z: f64 = rng.sample(StandardNormal);
        if z.abs() <= TRUNCATION {
            return z;
        }
    }
}

/// Stream of i.i.d. batches.
pub trait Sampler {
    fn dim(&self) -> usize;
    fn sample(&mut self, n: usize) -> Result<Tensor>;
}

/// A distribution together with its own seeded generator.
#[derive(Clone, Debug)]
pub struct SeededSampler {
    source: Source,
    rng: ChaCha8Rng,
}

#[derive(Clone, Debug)]
enum Source {
    Toy(ToyDistribution),
    Gaussian(GaussianSampler),
}

impl SeededSampler {
    pub fn toy(dist: ToyDistribution, seed: u64) -> Result<Self> {
        dist.validate()?;
        Ok(Self {
            source: Source::Toy(dist),
            rng: seeded_rng(seed),
        })
    }

    pub fn gaussian(dist: &GaussianDist, seed: u64) -> Result<Self> {
        Ok(Self {
            source: Source::Gaussian(dist.sampler()?),
            rng: seeded_rng(seed),
        })
    }
}

impl Sampler for SeededSampler {
    fn dim(&self) -> usize {
        match &self.source {
            Source::Toy(t) => t.dim(),
            Source::Gaussian(g) => g.dim(),
        }
    }

    fn sample(&mut self, n: usize) -> Result<Tensor> {
        match &self.source {
            Source::Toy(t) => t.sample(n, &mut self.rng),
            Source::Gaussian(g) => {
                if n == 0 {
                    return Err(Error::Empty("sample: n"));
                }
                Ok(g.sample(n, &mut self.rng))
            }
        }
    }
}

/// Two zero-mean Gaussians with independent random covariances.
pub fn make_gaussian_benchmark(dim: usize, seed: u64) -> Result<(GaussianDist, GaussianDist)> {
    if dim == 0 {
        return Err(Error::config("benchmark dimension must be at least 1"));
    }
    let mut r0 = seeded_rng(derive_seed(seed, 0));
    let mut r1 = seeded_rng(derive_seed(seed, 1));
    let p0 = GaussianDist::new(DVector::zeros(dim), random_covariance(dim, &mut r0))?;
    let p1 = GaussianDist::new(DVector::zeros(dim), random_covariance(dim, &mut r1))?;
    Ok((p0, p1))
}

/// Writes samples as CSV with header `x_0,...,x_{D-1}`.
pub fn write_samples_csv<W: Write>(samples: &Tensor, mut w: W) -> Result<()> {
    let d = samples.cols();
    let header: Vec<String> = (0..d).map(|k| format!("x_{k}")).collect();
    writeln!(w, "{}", header.join(","))?;
    for i in 0..samples.rows() {
        let row: Vec<String> = samples.row(i).iter().map(|v| v.to_string()).collect();
        writeln!(w, "{}", row.join(","))?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::gaussian_oracle::GaussianInstance;
    use crate::metrics::empirical_moments;

    #[test]
    fn gaussian_moments() {
        let n = 100_000;
        let x = ToyDistribution::gaussian().sample(n, &mut seeded_rng(1)).unwrap();
        let m = empirical_moments(&x).unwrap();
        let se = (1.0 / n as f64).sqrt();
        for i in 0..2 {
            assert!(m.mean[i].abs() < 3.0 * se);
            assert!((m.cov[(i, i)] - 1.0).abs() < 3.0 * (2.0f64).sqrt() * se);
        }
        assert!(m.cov[(0, 1)].abs() < 3.0 * se);
    }

    #[test]
    fn eight_gaussians_stay_near_centers() {
        let dist = ToyDistribution::eight_gaussians();
        let x = dist.sample(100_000, &mut seeded_rng(2)).unwrap();
        let centers = dist.centers();
        let far = (0..x.rows())
            .filter(|&i| {
                let p = x.row(i);
                let near = centers
                    .iter()
                    .map(|c| ((p[0] - c[0]).powi(2) + (p[1] - c[1]).powi(2)).sqrt())
                    .fold(f64::INFINITY, f64::min);
                near > 4.0 * 0.2
            })
            .count();
        // P(|z| > 4) for a 2-D standard normal is exp(-8) ~ 3.4e-4
        assert!(far as f64 / 100_000.0 <= 1e-3, "{far}");
    }

    #[test]
    fn swiss_roll_is_bounded() {
        let dist = ToyDistribution::swiss_roll();
        let x = dist.sample(50_000, &mut seeded_rng(3)).unwrap();
        let bound = ToyDistribution::swiss_roll_bound(0.1);
        assert!(x.data().iter().all(|v| v.abs() <= bound));
    }

    #[test]
    fn seeds_reproduce_samples() {
        for dist in [ToyDistribution::gaussian(), ToyDistribution::swiss_roll(), ToyDistribution::eight_gaussians()] {
            let a = dist.sample(100, &mut seeded_rng(4)).unwrap();
            let b = dist.sample(100, &mut seeded_rng(4)).unwrap();
            assert_eq!(a, b);
        }
        let mut s1 = SeededSampler::toy(ToyDistribution::swiss_roll(), 9).unwrap();
        let mut s2 = SeededSampler::toy(ToyDistribution::swiss_roll(), 9).unwrap();
        assert_eq!(s1.sample(10).unwrap(), s2.sample(10).unwrap());
    }

    #[test]
    fn invalid_parameters_are_rejected() {
        assert!(ToyDistribution::EightGaussians { radius: 0.0, std: 0.2 }.validate().is_err());
        assert!(ToyDistribution::Gaussian { dim: 2, std: -1.0 }.sample(3, &mut seeded_rng(0)).is_err());
    }

    #[test]
    fn benchmark_instances() {
        let (p0, p1) = make_gaussian_benchmark(8, 5).unwrap();
        for g in [&p0, &p1] {
            let eig = g.cov().clone().symmetric_eigen().eigenvalues;
            assert!(eig.iter().all(|&l| (0.5 - 1e-12..=2.0 + 1e-12).contains(&l)));
        }
        let (q0, _) = make_gaussian_benchmark(8, 6).unwrap();
        assert_ne!(p0, q0);
        let inst = GaussianInstance::new(&p0, &p1, 1.0, 5);
        let back: GaussianInstance = serde_json::from_str(&serde_json::to_string(&inst).unwrap()).unwrap();
        let (b0, b1) = back.marginals().unwrap();
        assert_eq!((b0, b1), (p0, p1));
    }

    #[test]
    fn toy_config_defaults() {
        let d: ToyDistribution = serde_json::from_str(r#"{"kind": "eight_gaussians"}"#).unwrap();
        assert_eq!(d, ToyDistribution::eight_gaussians());
        let mut buf = Vec::new();
        write_samples_csv(&Tensor::from_rows(&[[1.0, 2.5]]).unwrap(), &mut buf).unwrap();
        assert_eq!(String::from_utf8(buf).unwrap(), "x_0,x_1\n1,2.5\n");
    }
}
