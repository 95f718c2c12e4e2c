use super::config::{SdeConfig, TrackedField, VectorField};
use crate::autodiff::{Graph, Tensor, Var};
use crate::error::{Error, Result};
use crate::rng::NoiseStream;

/// Recorded Euler-Maruyama run: `states: [N + 1, B, D]`, `drifts: [N, B, D]`,
/// with `t_n = n / N`.
#[derive(Clone, Debug, PartialEq)]
pub struct TrajectoryBatch {
    pub states: Tensor,
    pub drifts: Tensor,
    /// number of standard normals consumed
    pub rng_draws: u64,
}

impl TrajectoryBatch {
    pub fn n_steps(&self) -> usize {
        self.drifts.shape()[0]
    }

    pub fn batch(&self) -> usize {
        self.states.shape()[1]
    }

    pub fn dim(&self) -> usize {
        self.states.shape()[2]
    }

    pub fn time(&self, n: usize) -> f64 {
        n as f64 / self.n_steps() as f64
    }

    /// `X_n` as `[B, D]`.
    pub fn state(&self, n: usize) -> Tensor {
        slab(&self.states, n)
    }

    /// `f(X_n, t_n)` as `[B, D]`.
    pub fn drift(&self, n: usize) -> Tensor {
        slab(&self.drifts, n)
    }

    pub fn final_state(&self) -> Tensor {
        self.state(self.n_steps())
    }
}

fn slab(t: &Tensor, n: usize) -> Tensor {
    let (b, d) = (t.shape()[1], t.shape()[2]);
    let data = t.data()[n * b * d..(n + 1) * b * d].to_vec();
    Tensor::new(vec![b, d], data).expect("slab of a rank-3 tensor")
}

fn check_x0(x0: &Tensor) -> Result<(usize, usize)> {
    if x0.ndim() != 2 {
        return Err(Error::InvalidShape {
            op: "euler_maruyama",
            msg: format!("initial states must be [B, D], got {:?}", x0.shape()),
        });
    }
    if x0.rows() == 0 {
        return Err(Error::Empty("euler_maruyama: batch"));
    }
    if !x0.is_finite() {
        return Err(Error::NonFinite {
            op: "euler_maruyama",
            context: Some("initial states".into()),
        });
    }
    Ok((x0.rows(), x0.cols()))
}

fn check_finite(op: &'static str, what: &str, step: usize, t: f64, v: &Tensor) -> Result<()> {
    if let Some(i) = v.data().iter().position(|x| !x.is_finite()) {
        return Err(Error::NonFinite {
            op,
            context: Some(format!("{what} at step {step}, t = {t}, batch index {}", i / v.cols())),
        });
    }
    Ok(())
}

/// Core stepping loop. `observe(n, x_n, f_n)` sees every pre-step state and
/// its drift; returns `X_N` and the number of normals drawn. Sample `i` of
/// `x0` uses noise id `first_sample + i`.
fn run<O>(
    x0: &Tensor,
    field: &dyn VectorField,
    cfg: &SdeConfig,
    noise: NoiseStream,
    first_sample: u64,
    mut observe: O,
) -> Result<(Tensor, u64)>
where
    O: FnMut(usize, &Tensor, &Tensor),
{
    cfg.validate()?;
    let (b, d) = check_x0(x0)?;
    let dt = cfg.dt();
    let sigma = (cfg.epsilon * dt).sqrt();
    let mut x = x0.clone();
    let mut draws = 0u64;
    for n in 0..cfg.n_steps {
        let t = cfg.time(n);
        let f = field.eval_field(&x, t, dt)?;
        if f.shape() != x.shape() {
            return Err(Error::shape("euler_maruyama", f.shape(), x.shape()));
        }
        if cfg.strict {
            check_finite("euler_maruyama", "drift", n, t, &f)?;
        }
        observe(n, &x, &f);
        let mut next = x.into_data();
        for (xi, fi) in next.iter_mut().zip(f.data()) {
            *xi += fi * dt;
        }
        if cfg.step_has_noise(n) {
            let z = noise.normals(n as u64, first_sample, b, d);
            draws += z.len() as u64;
            for (xi, zi) in next.iter_mut().zip(&z) {
                *xi += sigma * zi;
            }
        }
        x = Tensor::new(vec![b, d], next)?;
        if cfg.strict {
            check_finite("euler_maruyama", "state", n + 1, cfg.time(n + 1), &x)?;
        }
    }
    Ok((x, draws))
}

/// Simulates `X_{n+1} = X_n + f(X_n, t_n) dt + sqrt(epsilon dt) W_n` without
/// gradient tracking, recording every state and drift.
pub fn euler_maruyama(
    x0: &Tensor,
    field: &dyn VectorField,
    cfg: &SdeConfig,
    noise: NoiseStream,
) -> Result<TrajectoryBatch> {
    let (b, d) = check_x0(x0)?;
    let n_steps = cfg.n_steps;
    let mut states = Vec::with_capacity((n_steps + 1) * b * d);
    let mut drifts = Vec::with_capacity(n_steps * b * d);
    let (xn, rng_draws) = run(x0, field, cfg, noise, 0, |_, x, f| {
        states.extend_from_slice(x.data());
        drifts.extend_from_slice(f.data());
    })?;
    states.extend_from_slice(xn.data());
    Ok(TrajectoryBatch {
        states: Tensor::new(vec![n_steps + 1, b, d], states)?,
        drifts: Tensor::new(vec![n_steps, b, d], drifts)?,
        rng_draws,
    })
}

/// States at the requested step indices (each in `0..=N`), simulated in
/// chunks of at most `chunk` samples. Noise is addressed per sample, so the
/// result does not depend on `chunk`.
pub fn simulate_states(
    x0: &Tensor,
    field: &dyn VectorField,
    cfg: &SdeConfig,
    noise: NoiseStream,
    steps: &[usize],
    chunk: usize,
) -> Result<Vec<Tensor>> {
    let (b, d) = check_x0(x0)?;
    if let Some(&s) = steps.iter().find(|&&s| s > cfg.n_steps) {
        return Err(Error::config(format!("step {s} is past the final step {}", cfg.n_steps)));
    }
    let chunk = chunk.max(1);
    let mut out: Vec<Vec<f64>> = vec![Vec::with_capacity(b * d); steps.len()];
    let mut start = 0;
    while start < b {
        let end = (start + chunk).min(b);
        let part = Tensor::new(vec![end - start, d], x0.data()[start * d..end * d].to_vec())?;
        let (xn, _) = run(&part, field, cfg, noise, start as u64, |n, x, _| {
            for (k, &s) in steps.iter().enumerate() {
                if s == n {
                    out[k].extend_from_slice(x.data());
                }
            }
        })?;
        for (k, &s) in steps.iter().enumerate() {
            if s == cfg.n_steps {
                out[k].extend_from_slice(xn.data());
            }
        }
        start = end;
    }
    out.into_iter().map(|v| Tensor::new(vec![b, d], v)).collect()
}

/// Euler-Maruyama recorded in a graph; gradients reach the drift
/// parameters through every step, including through `X_n` into later drifts.
#[derive(Clone, Debug)]
pub struct TrackedTrajectory {
    pub states: Vec<Var>,
    pub drifts: Vec<Var>,
    pub rng_draws: u64,
}

impl TrackedTrajectory {
    pub fn final_state(&self) -> Var {
        *self.states.last().expect("trajectory has at least the initial state")
    }

    /// Plain copy of the recorded values.
    pub fn to_batch(&self, g: &Graph) -> Result<TrajectoryBatch> {
        let stack = |vars: &[Var]| -> Result<Tensor> {
            let first = g.value(vars[0]);
            let (b, d) = (first.rows(), first.cols());
            let mut data = Vec::with_capacity(vars.len() * b * d);
            for v in vars {
                data.extend_from_slice(g.value(*v).data());
            }
            Tensor::new(vec![vars.len(), b, d], data)
        };
        Ok(TrajectoryBatch {
            states: stack(&self.states)?,
            drifts: stack(&self.drifts)?,
            rng_draws: self.rng_draws,
        })
    }
}

pub fn euler_maruyama_tracked(
    g: &mut Graph,
    x0: &Tensor,
    field: &dyn TrackedField,
    cfg: &SdeConfig,
    noise: NoiseStream,
) -> Result<TrackedTrajectory> {
    cfg.validate()?;
    let (b, d) = check_x0(x0)?;
    let dt = cfg.dt();
    let sigma = (cfg.epsilon * dt).sqrt();
    let mut x = g.constant(x0.clone());
    let mut states = vec![x];
    let mut drifts = Vec::with_capacity(cfg.n_steps);
    let mut rng_draws = 0u64;
    for n in 0..cfg.n_steps {
        let t = cfg.time(n);
        let f = field.eval_tracked(g, x, t, dt)?;
        if g.shape(f) != g.shape(x) {
            return Err(Error::shape("euler_maruyama", g.shape(f), g.shape(x)));
        }
        if cfg.strict {
            check_finite("euler_maruyama", "drift", n, t, g.value(f))?;
        }
        let step = g.scale(f, dt)?;
        let mut next = g.add(x, step)?;
        if cfg.step_has_noise(n) {
            let mut z = noise.normals(n as u64, 0, b, d);
            rng_draws += z.len() as u64;
            z.iter_mut().for_each(|v| *v *= sigma);
            let z = g.constant(Tensor::new(vec![b, d], z)?);
            next = g.add(next, z)?;
        }
        if cfg.strict {
            check_finite("euler_maruyama", "state", n + 1, cfg.time(n + 1), g.value(next))?;
        }
        drifts.push(f);
        states.push(next);
        x = next;
    }
    Ok(TrackedTrajectory {
        states,
        drifts,
        rng_draws,
    })
}
