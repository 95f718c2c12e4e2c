//! `enot oracle-check`: closed-form Gaussian EOT against grid Sinkhorn, and
//! bridge-marginal sampling against its closed form.

use enot::discrete_oracle::gaussian_grid_cross_covariance;
use enot::gaussian_oracle::{bridge_marginal_sample, eot_cross_covariance, solve_gaussian_eot, GaussianDist};
use enot::metrics::bw2_uvp_samples;
use enot::rng::seeded_rng;
use nalgebra::DMatrix;
use serde::Serialize;

use crate::error::CliResult;

/// Grid-limited agreement bound of the cross-covariance check.
pub const CROSS_COV_TOL: f64 = 1e-2;
/// Monte-Carlo noise floor of the bridge check at `BRIDGE_SAMPLES`.
pub const BRIDGE_UVP_TOL: f64 = 0.1;
pub const BRIDGE_SAMPLES: usize = 100_000;
const SINKHORN_TOL: f64 = 1e-9;
const SINKHORN_MAX_ITER: usize = 100_000;
const GRID_SPAN: f64 = 6.0;

#[derive(Clone, Debug, Serialize)]
pub struct CaseReport {
    pub check: String,
    pub dim: usize,
    pub epsilon: f64,
    pub params: String,
    pub value: f64,
    pub tolerance: f64,
    pub pass: bool,
}

impl CaseReport {
    pub fn line(&self) -> String {
        format!(
            "{} {:<12} dim={} eps={} {} value={:.3e} tol={:.1e}",
            if self.pass { "PASS" } else { "FAIL" },
            self.check,
            self.dim,
            self.epsilon,
            self.params,
            self.value,
            self.tolerance
        )
    }
}

struct Pair {
    label: String,
    p0: GaussianDist,
    p1: GaussianDist,
    grid: usize,
}

fn one_d(v0: f64, v1: f64) -> CliResult<Pair> {
    Ok(Pair {
        label: format!("var0={v0} var1={v1}"),
        p0: GaussianDist::centered(DMatrix::from_element(1, 1, v0))?,
        p1: GaussianDist::centered(DMatrix::from_element(1, 1, v1))?,
        grid: 2001,
    })
}

fn pairs(quick: bool) -> CliResult<Vec<Pair>> {
    let mut out = vec![one_d(1.0, 1.0)?, one_d(0.5, 3.0)?];
    if !quick {
        let (p0, p1) = enot::datagen::make_gaussian_benchmark(2, 0)?;
        out.push(Pair {
            label: "benchmark seed=0".to_string(),
            p0,
            p1,
            grid: 101,
        });
    }
    Ok(out)
}

/// Runs every case. `eps_factor` scales the entropic parameter handed to the
/// closed form only; any value other than 1 must make the check fail.
pub fn run(quick: bool, eps_factor: f64) -> CliResult<Vec<CaseReport>> {
    let mut reports = Vec::new();
    for pair in pairs(quick)? {
        for eps in [0.1, 1.0] {
            let exact = eot_cross_covariance(pair.p0.cov(), pair.p1.cov(), eps_factor * eps)?;
            let (grid, coupling) = gaussian_grid_cross_covariance(
                &pair.p0,
                &pair.p1,
                eps,
                pair.grid,
                GRID_SPAN,
                SINKHORN_TOL,
                SINKHORN_MAX_ITER,
            )?;
            let rel = (&grid - &exact).norm() / exact.norm();
            reports.push(CaseReport {
                check: "cross_cov".to_string(),
                dim: pair.p0.dim(),
                epsilon: eps,
                params: format!(
                    "{} grid={} closed_form={:.6} sinkhorn={:.6} converged={}",
                    pair.label,
                    pair.grid,
                    exact[(0, 0)],
                    grid[(0, 0)],
                    coupling.converged
                ),
                value: rel,
                tolerance: CROSS_COV_TOL,
                pass: coupling.converged && rel < CROSS_COV_TOL,
            });

            let plan = solve_gaussian_eot(&pair.p0, &pair.p1, eps)?;
            let mut rng = seeded_rng(17);
            for t in [0.25, 0.5, 0.75] {
                let xt = bridge_marginal_sample(&plan, t, BRIDGE_SAMPLES, &mut rng)?;
                let uvp = bw2_uvp_samples(&xt, &plan.bridge_marginal(t)?)?;
                reports.push(CaseReport {
                    check: "bridge_uvp".to_string(),
                    dim: pair.p0.dim(),
                    epsilon: eps,
                    params: format!("{} t={t} n={BRIDGE_SAMPLES}", pair.label),
                    value: uvp,
                    tolerance: BRIDGE_UVP_TOL,
                    pass: uvp < BRIDGE_UVP_TOL,
                });
            }
        }
    }
    Ok(reports)
}
