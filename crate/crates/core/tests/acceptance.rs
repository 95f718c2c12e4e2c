//! Acceptance suite. Prints one `PASS`/`FAIL`/`SKIP` line per criterion and
//! exits non-zero if any criterion fails.
//!
//! Positional arguments select criteria by number (`cargo test --test
//! acceptance -- 3 7`). The slow tier (criterion 5) runs only when
//! `ENOT_ACCEPTANCE_SLOW=1`.

use std::collections::BTreeMap;
use std::io::Write;
use std::path::PathBuf;
use std::process::ExitCode;
use std::time::Instant;

use enot::autodiff::{grad_check, Graph, Tensor, Var};
use enot::datagen::{make_gaussian_benchmark, SeededSampler, ToyDistribution};
use enot::discrete_oracle::{gaussian_grid_cross_covariance, sinkhorn, DiscreteEotProblem};
use enot::gaussian_oracle::{eot_cross_covariance, solve_gaussian_eot, GaussianDist, GaussianEotPlan};
use enot::nets::{Checkpoint, DriftModel, Parametrization, PotentialModel};
use enot::rng::{derive_seed, seeded_rng, NoiseStream};
use enot::sde::{
    energy_estimate, energy_estimate_tracked, euler_maruyama, euler_maruyama_tracked, relative_energy_estimate,
    relative_energy_estimate_tracked, write_trajectory_csv, PriorDrift, SdeConfig,
};
use enot::training::{
    evaluate_gaussian, evaluate_toy, functional_eval, init_models, loss_beta, loss_beta_value, loss_f,
    loss_f_value, train_enot, train_from, GaussianEvalReport, NoObserver, TrainConfig, TrainOutcome,
    TrainStatus,
};
use nalgebra::DMatrix;
use rand::Rng;
use rand_chacha::ChaCha8Rng;

type Check = Result<(bool, String), String>;

/// Writes past the test harness' output capture.
fn say(line: &str) {
    let mut err = std::io::stderr().lock();
    let _ = writeln!(err, "{line}");
}

fn out_dir() -> PathBuf {
    let dir = PathBuf::from(env!("CARGO_TARGET_TMPDIR")).join("acceptance");
    std::fs::create_dir_all(&dir).expect("create acceptance output directory");
    dir
}

// ---------------------------------------------------------------- criterion 1

fn uniform(rng: &mut ChaCha8Rng, shape: &[usize]) -> Tensor {
    let n = shape.iter().product();
    Tensor::new(shape.to_vec(), (0..n).map(|_| rng.random_range(-1.0..1.0)).collect()).unwrap()
}

/// Values with `|v| >= 0.1`, away from the kink of (leaky) ReLU.
fn off_kink(rng: &mut ChaCha8Rng, shape: &[usize]) -> Tensor {
    uniform(rng, shape).map(|v| if v >= 0.0 { v + 0.1 } else { v - 0.1 })
}

/// `sum(op(x) * w)` for a random weight `w` of the output shape.
fn weighted<F>(op: F, weight: Tensor) -> impl Fn(&mut Graph, Var) -> enot::Result<Var>
where
    F: Fn(&mut Graph, Var) -> enot::Result<Var>,
{
    move |g, x| {
        let y = op(g, x)?;
        let w = g.constant(weight.clone());
        let p = g.mul(y, w)?;
        g.sum_all(p)
    }
}

fn primitive_cases() -> Result<(usize, f64), String> {
    let mut rng = seeded_rng(101);
    let mut worst: f64 = 0.0;
    let mut count = 0;
    let mut run = |name: &str, point: Tensor, f: &dyn Fn(&mut Graph, Var) -> enot::Result<Var>| -> Result<(), String> {
        let r = grad_check(f, &point, 1e-6).map_err(|e| format!("{name}: {e}"))?;
        if r.non_finite > 0 {
            return Err(format!("{name}: non-finite gradient"));
        }
        worst = worst.max(r.max_rel_error);
        count += 1;
        Ok(())
    };
    for _ in 0..8 {
        let (m, k, n) = (rng.random_range(1..5), rng.random_range(1..5), rng.random_range(1..5));
        let a = uniform(&mut rng, &[m, k]);
        let b = uniform(&mut rng, &[k, n]);
        let bias = uniform(&mut rng, &[n]);
        let wt = uniform(&mut rng, &[n, k]);
        let w_mn = uniform(&mut rng, &[m, n]);
        let w_mk = uniform(&mut rng, &[m, k]);
        let row = uniform(&mut rng, &[1, k]);
        let c = rng.random_range(-2.0..2.0);

        let bb = b.clone();
        run("matmul lhs", a.clone(), &weighted(move |g, x| { let y = g.constant(bb.clone()); g.matmul(x, y) }, w_mn.clone()))?;
        let aa = a.clone();
        run("matmul rhs", b.clone(), &weighted(move |g, x| { let y = g.constant(aa.clone()); g.matmul(y, x) }, w_mn.clone()))?;
        let (w2, b2) = (wt.clone(), bias.clone());
        run("linear x", a.clone(), &weighted(move |g, x| { let w = g.constant(w2.clone()); let b = g.constant(b2.clone()); g.linear(x, w, b) }, w_mn.clone()))?;
        let (a2, b2) = (a.clone(), bias.clone());
        run("linear w", wt.clone(), &weighted(move |g, w| { let x = g.constant(a2.clone()); let b = g.constant(b2.clone()); g.linear(x, w, b) }, w_mn.clone()))?;
        let (a2, w2) = (a.clone(), wt.clone());
        run("linear b", bias.clone(), &weighted(move |g, b| { let x = g.constant(a2.clone()); let w = g.constant(w2.clone()); g.linear(x, w, b) }, w_mn.clone()))?;
        let r2 = row.clone();
        run("add broadcast", a.clone(), &weighted(move |g, x| { let y = g.constant(r2.clone()); g.add(x, y) }, w_mk.clone()))?;
        let a2 = a.clone();
        run("add broadcast rhs", row.clone(), &weighted(move |g, y| { let x = g.constant(a2.clone()); g.add(x, y) }, w_mk.clone()))?;
        let r2 = row.clone();
        run("sub", a.clone(), &weighted(move |g, x| { let y = g.constant(r2.clone()); g.sub(y, x) }, w_mk.clone()))?;
        let a2 = a.clone();
        run("mul broadcast rhs", row.clone(), &weighted(move |g, y| { let x = g.constant(a2.clone()); g.mul(x, y) }, w_mk.clone()))?;
        run("mul self", a.clone(), &weighted(|g, x| g.mul(x, x), w_mk.clone()))?;
        run("scale", a.clone(), &weighted(move |g, x| g.scale(x, c), w_mk.clone()))?;
        run("add_scalar", a.clone(), &weighted(move |g, x| g.add_scalar(x, c), w_mk.clone()))?;
        run("relu", off_kink(&mut rng, &[m, k]), &weighted(|g, x| g.relu(x), w_mk.clone()))?;
        run("leaky_relu", off_kink(&mut rng, &[m, k]), &weighted(|g, x| g.leaky_relu(x, 0.2), w_mk.clone()))?;
        run("square", a.clone(), &weighted(|g, x| g.square(x), w_mk.clone()))?;
        let w_k = uniform(&mut rng, &[k]);
        run("sum axis 0", a.clone(), &weighted(|g, x| g.sum(x, &[0]), w_k.clone()))?;
        let w_m = uniform(&mut rng, &[m]);
        run("mean axis 1", a.clone(), &weighted(|g, x| g.mean(x, &[1]), w_m))?;
        run("sum_all", a.clone(), &|g: &mut Graph, x: Var| { let s = g.sum_all(x)?; g.square(s) })?;
        run("mean_all", a.clone(), &|g: &mut Graph, x: Var| { let s = g.mean_all(x)?; g.square(s) })?;
        let other = uniform(&mut rng, &[m, 2]);
        let w_cat = uniform(&mut rng, &[m, k + 2]);
        run("concat", a.clone(), &weighted(move |g, x| { let y = g.constant(other.clone()); g.concat(&[y, x]) }, w_cat))?;
        let end = rng.random_range(1..=k);
        let w_sl = uniform(&mut rng, &[m, end]);
        run("slice", a.clone(), &weighted(move |g, x| g.slice(x, 1, 0, end), w_sl))?;
    }
    Ok((count, worst))
}

fn random_drift(dim: usize, hidden: &[usize], mode: Parametrization, rng: &mut ChaCha8Rng) -> DriftModel {
    let mut m = DriftModel::new(dim, hidden, mode, rng).unwrap();
    // the output layer starts at zero; randomise it so the field is non-trivial
    let last = m.mlp.params().len() - 2;
    for p in [last, last + 1] {
        for v in m.mlp.params_mut()[p].data_mut() {
            *v = rng.random_range(-0.5..0.5);
        }
    }
    m
}

fn rel_err(a: f64, n: f64) -> f64 {
    (a - n).abs() / n.abs().max(1.0)
}

fn pipeline_cases() -> Result<(usize, f64), String> {
    let mut worst: f64 = 0.0;
    let mut count = 0;
    let h = 1e-6;
    for case in 0..40u64 {
        let mut rng = seeded_rng(200 + case);
        let dim = 1 + (case as usize % 3);
        let mode = if case % 4 == 3 { Parametrization::Residual } else { Parametrization::Drift };
        let eps = [0.0, 0.3, 1.0][case as usize % 3];
        let drift = random_drift(dim, &[6], mode, &mut rng);
        let potential = PotentialModel::new(dim, &[6], &mut rng).unwrap();
        let cfg = SdeConfig::new(eps, 4);
        let ns = NoiseStream::new(case, 1);
        let x0 = uniform(&mut rng, &[4, dim]);
        let y = uniform(&mut rng, &[4, dim]);
        let err = |e: enot::Error| e.to_string();

        if case % 2 == 0 {
            // loss_f through the simulation, with respect to the drift
            let mut g = Graph::new();
            let bf = drift.bind(&mut g, true);
            let bb = potential.bind(&mut g, false);
            let tr = euler_maruyama_tracked(&mut g, &x0, &bf, &cfg, ns).map_err(err)?;
            let (l, _) = loss_f(&mut g, &tr, &bb, &PriorDrift::Zero).map_err(err)?;
            g.backward(l).map_err(err)?;
            let grads = bf.mlp.grads(&g);
            let value = |d: &DriftModel| -> enot::Result<f64> {
                loss_f_value(&euler_maruyama(&x0, d, &cfg, ns)?, &potential, &PriorDrift::Zero)
            };
            for (p, grad) in grads.iter().enumerate() {
                for k in 0..grad.numel() {
                    let (mut plus, mut minus) = (drift.clone(), drift.clone());
                    plus.mlp.params_mut()[p].data_mut()[k] += h;
                    minus.mlp.params_mut()[p].data_mut()[k] -= h;
                    let num = (value(&plus).map_err(err)? - value(&minus).map_err(err)?) / (2.0 * h);
                    worst = worst.max(rel_err(grad.data()[k], num));
                }
            }
        } else {
            // loss_beta with respect to the potential
            let xn = euler_maruyama(&x0, &drift, &cfg, ns).map_err(err)?.final_state();
            let mut g = Graph::new();
            let bb = potential.bind(&mut g, true);
            let (xv, yv) = (g.constant(xn.clone()), g.constant(y.clone()));
            let l = loss_beta(&mut g, xv, yv, &bb).map_err(err)?;
            g.backward(l).map_err(err)?;
            let grads = bb.mlp.grads(&g);
            for (p, grad) in grads.iter().enumerate() {
                for k in 0..grad.numel() {
                    let (mut plus, mut minus) = (potential.clone(), potential.clone());
                    plus.mlp.params_mut()[p].data_mut()[k] += h;
                    minus.mlp.params_mut()[p].data_mut()[k] -= h;
                    let num = (loss_beta_value(&xn, &y, &plus).map_err(err)?
                        - loss_beta_value(&xn, &y, &minus).map_err(err)?)
                        / (2.0 * h);
                    worst = worst.max(rel_err(grad.data()[k], num));
                }
            }
        }
        count += 1;
    }
    Ok((count, worst))
}

fn criterion_1() -> Check {
    let (np, wp) = primitive_cases()?;
    let (nl, wl) = pipeline_cases()?;
    let pass = np + nl >= 100 && wp < 1e-5 && wl < 1e-4;
    Ok((
        pass,
        format!("{np} primitive cases max rel err {wp:.2e} (< 1e-5); {nl} pipeline cases max rel err {wl:.2e} (< 1e-4)"),
    ))
}

// ---------------------------------------------------------------- criterion 2

fn criterion_2() -> Check {
    let mut lines = Vec::new();
    let mut pass = true;
    let mut rng = seeded_rng(12);
    let pairs = vec![
        (1, GaussianDist::standard(1), GaussianDist::standard(1), 2001),
        (
            1,
            GaussianDist::centered(DMatrix::from_element(1, 1, 0.5)).unwrap(),
            GaussianDist::centered(DMatrix::from_element(1, 1, 3.0)).unwrap(),
            2001,
        ),
        (
            2,
            GaussianDist::centered(enot::gaussian_oracle::random_covariance(2, &mut rng)).unwrap(),
            GaussianDist::centered(enot::gaussian_oracle::random_covariance(2, &mut rng)).unwrap(),
            101,
        ),
    ];
    for (d, p0, p1, k) in &pairs {
        for eps in [0.1, 1.0] {
            let exact = eot_cross_covariance(p0.cov(), p1.cov(), eps).map_err(|e| e.to_string())?;
            let (grid, cp) = gaussian_grid_cross_covariance(p0, p1, eps, *k, 6.0, 1e-10, 100_000).map_err(|e| e.to_string())?;
            let rel = (&grid - &exact).norm() / exact.norm();
            pass &= cp.converged && rel < 1e-2;
            lines.push(format!("D={d} eps={eps}: {rel:.1e}"));
        }
    }
    // reference value stated for the 1-D unit case at eps = 1
    let unit = eot_cross_covariance(&DMatrix::identity(1, 1), &DMatrix::identity(1, 1), 1.0).map_err(|e| e.to_string())?[(0, 0)];
    let reference = 2f64.sqrt() - 1.0;
    let value_ok = (unit - reference).abs() / reference < 1e-2;
    pass &= value_ok;
    Ok((
        pass,
        format!(
            "closed form vs Sinkhorn rel err [{}] (< 1e-2); 1-D eps=1 closed form {unit:.6} vs stated sqrt(2)-1 = {reference:.6}: {}",
            lines.join(", "),
            if value_ok { "match" } else { "MISMATCH" }
        ),
    ))
}

// ---------------------------------------------------------------- criterion 3

fn criterion_3() -> Check {
    let mut worst: f64 = 0.0;
    let mut all_converged = true;
    for seed in 0..20u64 {
        let mut rng = seeded_rng(300 + seed);
        let n = 50;
        let cost = uniform(&mut rng, &[n, n]).map(|v| v.abs());
        let mut w = || {
            let v: Vec<f64> = (0..n).map(|_| rng.random_range(0.1..1.0)).collect();
            let s: f64 = v.iter().sum();
            v.into_iter().map(|x| x / s).collect::<Vec<_>>()
        };
        let (a, b) = (w(), w());
        let p = DiscreteEotProblem::new(cost, a, b, 0.1).map_err(|e| e.to_string())?;
        let c = sinkhorn(&p, 1e-10, 100_000).map_err(|e| e.to_string())?;
        all_converged &= c.converged;
        worst = worst.max(c.residual());
    }
    // 2x2 with a 1-parameter feasible family [[q, 1/2 - q], [1/2 - q, q]]
    let eps = 0.7;
    let p = DiscreteEotProblem::new(Tensor::from_rows(&[[0.0, 1.0], [1.0, 0.0]]).unwrap(), vec![0.5; 2], vec![0.5; 2], eps)
        .map_err(|e| e.to_string())?;
    let c = sinkhorn(&p, 1e-14, 10_000).map_err(|e| e.to_string())?;
    let objective = |q: f64| {
        let off = 0.5 - q;
        2.0 * off + eps * 2.0 * (q * q.ln() + off * off.ln())
    };
    let (mut lo, mut hi) = (1e-15, 0.5 - 1e-15);
    let r = (5f64.sqrt() - 1.0) / 2.0;
    while hi - lo > 1e-14 {
        let (x1, x2) = (hi - r * (hi - lo), lo + r * (hi - lo));
        if objective(x1) < objective(x2) {
            hi = x2;
        } else {
            lo = x1;
        }
    }
    let q = 0.5 * (lo + hi);
    let scan_err = (0..4).map(|i| (c.plan.data()[i] - if i == 0 || i == 3 { q } else { 0.5 - q }).abs()).fold(0.0, f64::max);
    Ok((
        all_converged && worst <= 1e-9 && scan_err < 1e-8,
        format!("20 random 50x50: max marginal residual {worst:.1e} (<= 1e-9); 2x2 vs scan {scan_err:.1e} (< 1e-8)"),
    ))
}

// ---------------------------------------------------------- criteria 4, 5, 6

const GAUSS_EVAL_SAMPLES: usize = 100_000;
const T_GRID: [f64; 6] = [0.0, 0.2, 0.4, 0.6, 0.8, 1.0];

fn gaussian_config(dim: usize) -> TrainConfig {
    TrainConfig {
        epsilon: 1.0,
        n_steps: 100,
        inner_steps: 10,
        lr_f: 3e-4,
        lr_beta: 3e-4,
        batch_size: 256,
        total_outer_iters: if dim <= 2 { 600 } else { 2_000 },
        seed: 0,
        strict_finite: false,
        eval_every: 0,
        hidden_f: vec![64, 64],
        hidden_beta: vec![64, 64],
        ..TrainConfig::default()
    }
}

fn gaussian_benchmark(dim: usize) -> Result<(GaussianEvalReport, f64), String> {
    let err = |e: enot::Error| e.to_string();
    let cfg = gaussian_config(dim);
    let (p0, p1) = make_gaussian_benchmark(dim, 0).map_err(err)?;
    let plan: GaussianEotPlan = solve_gaussian_eot(&p0, &p1, cfg.epsilon).map_err(err)?;
    let start = Instant::now();
    let mut s0 = SeededSampler::gaussian(&p0, derive_seed(cfg.seed, 10)).map_err(err)?;
    let mut s1 = SeededSampler::gaussian(&p1, derive_seed(cfg.seed, 11)).map_err(err)?;
    let out = train_enot(&mut s0, &mut s1, &cfg, &mut NoObserver).map_err(err)?;
    if out.status != TrainStatus::Completed {
        return Err(format!("training did not complete: {:?}", out.status));
    }
    let minutes = start.elapsed().as_secs_f64() / 60.0;
    let mut e0 = SeededSampler::gaussian(&p0, derive_seed(cfg.seed, 12)).map_err(err)?;
    let noise = NoiseStream::new(derive_seed(cfg.seed, 13), 0);
    let report =
        evaluate_gaussian(&out.drift, &cfg.sde(), &plan, &mut e0, GAUSS_EVAL_SAMPLES, &T_GRID, noise).map_err(err)?;
    Ok((report, minutes))
}

fn gaussian_verdict(dim: usize, r: &GaussianEvalReport, minutes: f64, tol: f64) -> (bool, String) {
    let cfg = gaussian_config(dim);
    (
        r.plan_uvp <= tol && r.target_uvp <= tol,
        format!(
            "D={dim} eps=1 N={} iters={} hidden={:?} batch={}: plan UVP {:.3}%, target UVP {:.3}% (<= {tol}%), train {minutes:.1} min",
            cfg.n_steps, cfg.total_outer_iters, cfg.hidden_f, cfg.batch_size, r.plan_uvp, r.target_uvp
        ),
    )
}

fn criterion_6(r: &GaussianEvalReport) -> Check {
    let values: Vec<f64> = r.marginal_uvp.iter().map(|&(_, v)| v).collect();
    let at_zero = values[0];
    let all_ok = values.iter().all(|&v| v <= 2.0);
    let flags: Vec<String> = r
        .marginal_uvp
        .windows(2)
        .filter(|w| w[1].1 < w[0].1 - 1.0)
        .map(|w| format!("drop of {:.2} points between t={} and t={}", w[0].1 - w[1].1, w[0].0, w[1].0))
        .collect();
    let listing: Vec<String> = r.marginal_uvp.iter().map(|(t, v)| format!("t={t}: {v:.3}%")).collect();
    Ok((
        all_ok && at_zero <= 0.1,
        format!(
            "D=2 marginal UVP [{}] (<= 2% each, t=0 <= 0.1%); monotone-trend flags: {}",
            listing.join(", "),
            if flags.is_empty() { "none".to_string() } else { flags.join("; ") }
        ),
    ))
}

// ---------------------------------------------------------------- criterion 7

fn criterion_7() -> Check {
    let err = |e: enot::Error| e.to_string();
    let mut worst: f64 = 0.0;
    for seed in 0..5u64 {
        let mut rng = seeded_rng(700 + seed);
        let drift = random_drift(2, &[16, 16], Parametrization::Drift, &mut rng);
        let beta = PotentialModel::new(2, &[16, 16], &mut rng).unwrap();
        let x0 = ToyDistribution::gaussian().sample(512, &mut rng).map_err(err)?;
        let y = ToyDistribution::eight_gaussians().sample(512, &mut rng).map_err(err)?;
        let cfg = SdeConfig::new(0.1, 10);
        let ns = NoiseStream::new(seed, 0);
        let base = functional_eval(&beta, &drift, &cfg, 1.0, &x0, &y, ns).map_err(err)?;
        for c in [0.5, 2.0, 10.0] {
            let scaled = functional_eval(&beta.scaled(c), &drift, &cfg, c, &x0, &y, ns).map_err(err)?;
            worst = worst.max((scaled / c - base).abs() / base.abs());
        }
    }
    Ok((worst <= 1e-10, format!("5 random network pairs, C in {{0.5, 2, 10}}: max rel err {worst:.1e} (<= 1e-10)")))
}

// ------------------------------------------------------------- criteria 8, 9

const TOY_EVAL_SAMPLES: usize = 5_000;

fn toy_config(eps: f64, seed: u64) -> TrainConfig {
    TrainConfig {
        epsilon: eps,
        n_steps: 10,
        inner_steps: 10,
        lr_f: 5e-4,
        lr_beta: 5e-4,
        batch_size: 512,
        total_outer_iters: 1_250,
        seed,
        eval_every: 0,
        hidden_f: vec![64, 64],
        hidden_beta: vec![64, 64],
        ..TrainConfig::default()
    }
}

struct ToyRun {
    outcome: TrainOutcome,
    model: f64,
    identity: f64,
    minutes: f64,
}

fn toy_run(target: &ToyDistribution, cfg: &TrainConfig) -> Result<ToyRun, String> {
    let err = |e: enot::Error| e.to_string();
    let start = Instant::now();
    let mut s0 = SeededSampler::toy(ToyDistribution::gaussian(), derive_seed(cfg.seed, 10)).map_err(err)?;
    let mut s1 = SeededSampler::toy(target.clone(), derive_seed(cfg.seed, 11)).map_err(err)?;
    let outcome = train_enot(&mut s0, &mut s1, cfg, &mut NoObserver).map_err(err)?;
    let minutes = start.elapsed().as_secs_f64() / 60.0;
    let mut e0 = SeededSampler::toy(ToyDistribution::gaussian(), derive_seed(cfg.seed, 12)).map_err(err)?;
    let mut e1 = SeededSampler::toy(target.clone(), derive_seed(cfg.seed, 13)).map_err(err)?;
    let noise = NoiseStream::new(derive_seed(cfg.seed, 14), 0);
    let (report, _, _) = evaluate_toy(&outcome.drift, &cfg.sde(), &mut e0, &mut e1, TOY_EVAL_SAMPLES, noise).map_err(err)?;
    Ok(ToyRun {
        outcome,
        model: report.model,
        identity: report.identity,
        minutes,
    })
}

fn toy_name(t: &ToyDistribution) -> &'static str {
    match t {
        ToyDistribution::SwissRoll { .. } => "swiss_roll",
        ToyDistribution::EightGaussians { .. } => "eight_gaussians",
        ToyDistribution::Gaussian { .. } => "gaussian",
    }
}

fn export_trajectories(run: &ToyRun, cfg: &TrainConfig, name: &str) -> Result<PathBuf, String> {
    let err = |e: enot::Error| e.to_string();
    let x0 = ToyDistribution::gaussian().sample(256, &mut seeded_rng(derive_seed(cfg.seed, 15))).map_err(err)?;
    let traj = euler_maruyama(&x0, &run.outcome.drift, &cfg.sde(), NoiseStream::new(derive_seed(cfg.seed, 16), 0)).map_err(err)?;
    let path = out_dir().join(format!("{name}_trajectories.csv"));
    let file = std::fs::File::create(&path).map_err(|e| e.to_string())?;
    write_trajectory_csv(&traj, std::io::BufWriter::new(file)).map_err(err)?;
    Ok(path)
}

fn criterion_8(run: &ToyRun) -> Check {
    let err = |e: enot::Error| e.to_string();
    // bit-exact repeatability of the noiseless simulation, for any noise seed
    let cfg = SdeConfig::new(0.0, 10);
    let x0 = ToyDistribution::gaussian().sample(1000, &mut seeded_rng(8)).map_err(err)?;
    let a = euler_maruyama(&x0, &run.outcome.drift, &cfg, NoiseStream::new(1, 0)).map_err(err)?;
    let b = euler_maruyama(&x0, &run.outcome.drift, &cfg, NoiseStream::new(2, 9)).map_err(err)?;
    let bitwise = a.states.data().iter().zip(b.states.data()).all(|(u, v)| u.to_bits() == v.to_bits()) && a.rng_draws == 0;
    let ratio = run.identity / run.model;
    let path = export_trajectories(run, &toy_config(0.0, 0), "eps0_eight_gaussians")?;
    Ok((
        bitwise && ratio >= 5.0,
        format!(
            "eps=0 simulation bitwise repeatable: {bitwise}; Gaussian->8 Gaussians energy distance {:.4} vs identity {:.4}: {ratio:.1}x (>= 5x); trajectories {}",
            run.model,
            run.identity,
            path.display()
        ),
    ))
}

fn criterion_9(runs: &BTreeMap<(String, String), ToyRun>) -> Check {
    let mut pass = true;
    let mut lines = Vec::new();
    for ((name, eps), run) in runs {
        let ratio = run.identity / run.model;
        pass &= ratio >= 5.0;
        lines.push(format!("{name} eps={eps}: {ratio:.1}x ({:.1} min)", run.minutes));
    }
    // byte-exact reproducibility of a seeded run
    let cfg = TrainConfig {
        total_outer_iters: 25,
        ..toy_config(0.1, 42)
    };
    let first = toy_run(&ToyDistribution::swiss_roll(), &cfg)?;
    let second = toy_run(&ToyDistribution::swiss_roll(), &cfg)?;
    let bytes = |r: &ToyRun| -> Result<(String, String), String> {
        let h = r.outcome.history.to_jsonl().map_err(|e| e.to_string())?;
        let c = Checkpoint::new(25, r.outcome.drift.clone(), r.outcome.potential.clone(), serde_json::Value::Null)
            .to_json()
            .map_err(|e| e.to_string())?;
        Ok((h, c))
    };
    let identical = bytes(&first)? == bytes(&second)? && first.model.to_bits() == second.model.to_bits();
    pass &= identical;
    Ok((
        pass,
        format!(
            "energy distance improvement over identity (>= 5x): {}; seeded rerun byte-identical: {identical}",
            lines.join(", ")
        ),
    ))
}

// --------------------------------------------------------------- criterion 10

fn criterion_10() -> Check {
    let err = |e: enot::Error| e.to_string();
    let mut rng = seeded_rng(1000);
    let drift = random_drift(2, &[16], Parametrization::Drift, &mut rng);
    let x0 = uniform(&mut rng, &[64, 2]);
    let cfg = SdeConfig::new(0.2, 8);
    let ns = NoiseStream::new(10, 0);
    let traj = euler_maruyama(&x0, &drift, &cfg, ns).map_err(err)?;
    let zero_exact = relative_energy_estimate(&traj, &PriorDrift::Zero).map_err(err)?.to_bits()
        == energy_estimate(&traj).map_err(err)?.to_bits();
    let replay = relative_energy_estimate(&traj, &PriorDrift::Model { drift: drift.clone() }).map_err(err)?;

    let mut g = Graph::new();
    let bound = drift.bind(&mut g, true);
    let tr = euler_maruyama_tracked(&mut g, &x0, &bound, &cfg, ns).map_err(err)?;
    let e0 = relative_energy_estimate_tracked(&mut g, &tr, &PriorDrift::Zero).map_err(err)?;
    let e1 = energy_estimate_tracked(&mut g, &tr).map_err(err)?;
    let tracked_exact = g.value(e0).item().map_err(err)?.to_bits() == g.value(e1).item().map_err(err)?.to_bits();

    // a 2-D run under a rotating, contracting prior
    let prior = PriorDrift::Affine {
        matrix: Tensor::from_rows(&[[-0.5, 1.0], [-1.0, -0.5]]).unwrap(),
        offset: Tensor::vector(vec![0.2, 0.0]),
    };
    let tcfg = TrainConfig {
        epsilon: 0.1,
        n_steps: 10,
        inner_steps: 5,
        lr_f: 1e-3,
        lr_beta: 1e-3,
        batch_size: 256,
        total_outer_iters: 300,
        seed: 5,
        eval_every: 0,
        hidden_f: vec![32, 32],
        hidden_beta: vec![32, 32],
        prior,
        ..TrainConfig::default()
    };
    let (drift0, potential0) = init_models(&tcfg, 2).map_err(err)?;
    let mut s0 = SeededSampler::toy(ToyDistribution::gaussian(), 51).map_err(err)?;
    let mut s1 = SeededSampler::toy(ToyDistribution::eight_gaussians(), 52).map_err(err)?;
    let out = train_from(&mut s0, &mut s1, &tcfg, drift0.clone(), potential0, &mut NoObserver).map_err(err)?;
    let completed = out.status == TrainStatus::Completed;
    let mut erng = seeded_rng(53);
    let ex0 = ToyDistribution::gaussian().sample(4096, &mut erng).map_err(err)?;
    let ey = ToyDistribution::eight_gaussians().sample(4096, &mut erng).map_err(err)?;
    let ens = NoiseStream::new(54, 0);
    let before = functional_eval(&out.potential, &drift0, &tcfg.sde(), 1.0, &ex0, &ey, ens).map_err(err)?;
    let after = functional_eval(&out.potential, &out.drift, &tcfg.sde(), 1.0, &ex0, &ey, ens).map_err(err)?;

    Ok((
        zero_exact && tracked_exact && replay == 0.0 && completed && after < before,
        format!(
            "v=0 equals plain energy bitwise: {}; replay relative energy {replay:e}; affine-prior run {}: relaxed objective at final potential {before:.4} -> {after:.4}",
            zero_exact && tracked_exact,
            if completed { "completed" } else { "did not complete" }
        ),
    ))
}

// ----------------------------------------------------------------------- main

fn main() -> ExitCode {
    let selected: Vec<u32> = std::env::args().skip(1).filter_map(|a| a.parse().ok()).collect();
    let want = |n: u32| selected.is_empty() || selected.contains(&n);
    let slow = std::env::var("ENOT_ACCEPTANCE_SLOW").is_ok_and(|v| v == "1");
    let mut failures = 0;
    let mut report = |n: u32, name: &str, start: Instant, result: Check| {
        let secs = start.elapsed().as_secs_f64();
        let (tag, detail) = match result {
            Ok((true, d)) => ("PASS", d),
            Ok((false, d)) => ("FAIL", d),
            Err(e) => ("FAIL", format!("error: {e}")),
        };
        if tag == "FAIL" {
            failures += 1;
        }
        say(&format!("[criterion {n:>2}] {tag} {name} ({secs:.1} s): {detail}"));
    };

    if want(1) {
        let t = Instant::now();
        report(1, "gradient correctness", t, criterion_1());
    }
    if want(2) {
        let t = Instant::now();
        report(2, "oracle cross-validation", t, criterion_2());
    }
    if want(3) {
        let t = Instant::now();
        report(3, "Sinkhorn correctness", t, criterion_3());
    }
    if want(4) || want(6) {
        let t = Instant::now();
        match gaussian_benchmark(2) {
            Ok((r, minutes)) => {
                if want(4) {
                    report(4, "Gaussian benchmark D=2", t, Ok(gaussian_verdict(2, &r, minutes, 1.0)));
                }
                if want(6) {
                    report(6, "intermediate marginals D=2", Instant::now(), criterion_6(&r));
                }
            }
            Err(e) => {
                for n in [4, 6].into_iter().filter(|&n| want(n)) {
                    report(n, "Gaussian benchmark D=2", t, Err(e.clone()));
                }
            }
        }
    }
    if want(5) {
        if slow {
            let t = Instant::now();
            let result = gaussian_benchmark(16).map(|(r, m)| gaussian_verdict(16, &r, m, 2.0));
            report(5, "Gaussian benchmark D=16", t, result);
        } else {
            say("[criterion  5] SKIP Gaussian benchmark D=16: slow tier, set ENOT_ACCEPTANCE_SLOW=1");
        }
    }
    if want(7) {
        let t = Instant::now();
        report(7, "scaling invariance", t, criterion_7());
    }
    if want(8) || want(9) {
        let t = Instant::now();
        let mut runs = BTreeMap::new();
        let mut failed = None;
        for target in [ToyDistribution::eight_gaussians(), ToyDistribution::swiss_roll()] {
            for eps in [0.0, 0.01, 0.1] {
                if !want(9) && !(eps == 0.0 && toy_name(&target) == "eight_gaussians") {
                    continue;
                }
                let cfg = toy_config(eps, 0);
                match toy_run(&target, &cfg) {
                    Ok(run) => {
                        if want(9) {
                            let name = format!("{}_eps{eps}", toy_name(&target));
                            if let Err(e) = export_trajectories(&run, &cfg, &name) {
                                failed = Some(e);
                            }
                        }
                        runs.insert((toy_name(&target).to_string(), eps.to_string()), run);
                    }
                    Err(e) => failed = Some(e),
                }
            }
        }
        if want(8) {
            let result = match (&failed, runs.get(&("eight_gaussians".to_string(), "0".to_string()))) {
                (_, Some(run)) => criterion_8(run),
                (Some(e), None) => Err(e.clone()),
                (None, None) => Err("missing eps=0 run".to_string()),
            };
            report(8, "eps=0 mode", t, result);
        }
        if want(9) {
            let result = match failed {
                Some(e) => Err(e),
                None => criterion_9(&runs),
            };
            report(9, "toy experiments", t, result);
        }
    }
    if want(10) {
        let t = Instant::now();
        report(10, "general prior", t, criterion_10());
    }

    if failures == 0 {
        ExitCode::SUCCESS
    } else {
        say(&format!("{failures} criterion check(s) failed"));
        ExitCode::FAILURE
    }
}
