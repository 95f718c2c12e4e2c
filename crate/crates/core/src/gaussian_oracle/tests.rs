use nalgebra::{DMatrix, DVector};
use proptest::prelude::*;

use super::*;
use crate::rng::seeded_rng;

/// Mean and covariance of the rows of `x` (divisor n - 1).
fn moments(x: &Tensor) -> (DVector<f64>, DMatrix<f64>) {
    let (n, d) = (x.rows(), x.cols());
    let m = DMatrix::from_row_slice(n, d, x.data());
    let mean = DVector::from_fn(d, |j, _| m.column(j).sum() / n as f64);
    let c = DMatrix::from_fn(n, d, |i, j| m[(i, j)] - mean[j]);
    (mean, c.transpose() * c / (n as f64 - 1.0))
}

/// Every mean and covariance entry within `k` standard errors.
fn assert_moments(x: &Tensor, g: &GaussianDist, k: f64) {
    let n = x.rows() as f64;
    let (mean, cov) = moments(x);
    let s = g.cov();
    for i in 0..g.dim() {
        let se = (s[(i, i)] / n).sqrt();
        assert!((mean[i] - g.mean()[i]).abs() <= k * se + 1e-12, "mean {i}: {} vs {}", mean[i], g.mean()[i]);
        for j in 0..g.dim() {
            let se = ((s[(i, i)] * s[(j, j)] + s[(i, j)].powi(2)) / n).sqrt();
            assert!((cov[(i, j)] - s[(i, j)]).abs() <= k * se + 1e-12, "cov ({i},{j}): {} vs {}", cov[(i, j)], s[(i, j)]);
        }
    }
}

fn one_d(var: f64) -> GaussianDist {
    GaussianDist::centered(DMatrix::from_element(1, 1, var)).unwrap()
}

#[test]
fn zero_epsilon_between_equal_gaussians_is_identity() {
    let s = random_covariance(3, &mut seeded_rng(1));
    let g = GaussianDist::centered(s.clone()).unwrap();
    let plan = solve_gaussian_eot(&g, &g, 0.0).unwrap();
    assert!((&plan.cross - &s).amax() < 1e-12);
}

#[test]
fn unit_variances_unit_epsilon() {
    // c solves c^2 + eps c - s0 s1 = 0 (xy-coefficient of the plan density is 1/eps)
    let plan = solve_gaussian_eot(&one_d(1.0), &one_d(1.0), 1.0).unwrap();
    let golden = (5f64.sqrt() - 1.0) / 2.0;
    assert!((plan.cross[(0, 0)] - golden).abs() < 1e-14);
    assert!((plan.cross[(0, 0)] - 0.618_033_988_749_895).abs() < 1e-12);
}

#[test]
fn large_epsilon_decouples() {
    let plan = solve_gaussian_eot(&one_d(1.0), &one_d(1.0), 1e3).unwrap();
    // c ~ s0 s1 / eps
    assert!(plan.cross[(0, 0)].abs() < 1.01e-3);
    assert!(plan.cross[(0, 0)] > 0.0);
}

#[test]
fn singular_source_is_rejected() {
    let s0 = DMatrix::from_row_slice(2, 2, &[1.0, 1.0, 1.0, 1.0]);
    let p0 = GaussianDist::centered(s0).unwrap();
    assert!(solve_gaussian_eot(&p0, &GaussianDist::standard(2), 1.0).is_err());
}

#[test]
fn plan_samples_match_block_covariance() {
    let mut rng = seeded_rng(2);
    let p0 = GaussianDist::new(DVector::from_vec(vec![1.0, -2.0]), random_covariance(2, &mut rng)).unwrap();
    let p1 = GaussianDist::new(DVector::from_vec(vec![0.5, 3.0]), random_covariance(2, &mut rng)).unwrap();
    let plan = solve_gaussian_eot(&p0, &p1, 0.5).unwrap();
    let (x, y) = sample_plan(&plan, 100_000, &mut rng).unwrap();
    assert_moments(&x.hcat(&y).unwrap(), &plan.joint().unwrap(), 3.0);
}

#[test]
fn zero_epsilon_identity_plan_copies_samples() {
    let g = GaussianDist::standard(2);
    let plan = solve_gaussian_eot(&g, &g, 0.0).unwrap();
    let (x, y) = sample_plan(&plan, 1000, &mut seeded_rng(3)).unwrap();
    assert!(x.max_abs_diff(&y) <= 1e-6);
}

#[test]
fn bridge_endpoints_and_midpoint_variance() {
    let mut rng = seeded_rng(4);
    let p0 = GaussianDist::new(DVector::from_vec(vec![1.0, 0.0]), random_covariance(2, &mut rng)).unwrap();
    let p1 = GaussianDist::new(DVector::from_vec(vec![-1.0, 2.0]), random_covariance(2, &mut rng)).unwrap();
    let plan = solve_gaussian_eot(&p0, &p1, 1.0).unwrap();
    assert_eq!(plan.bridge_marginal(0.0).unwrap(), p0);
    assert_eq!(plan.bridge_marginal(1.0).unwrap(), p1);
    // 4 standard errors: ten entries are checked per endpoint
    assert_moments(&bridge_marginal_sample(&plan, 0.0, 50_000, &mut rng).unwrap(), &p0, 4.0);
    assert_moments(&bridge_marginal_sample(&plan, 1.0, 50_000, &mut rng).unwrap(), &p1, 4.0);

    let point = GaussianDist::centered(DMatrix::zeros(1, 1)).unwrap();
    let degenerate = GaussianEotPlan {
        p0: point.clone(),
        p1: point,
        cross: DMatrix::zeros(1, 1),
        epsilon: 1.0,
    };
    assert_eq!(degenerate.bridge_marginal(0.5).unwrap().cov()[(0, 0)], 0.25);
    let xs = bridge_marginal_sample(&degenerate, 0.5, 100_000, &mut rng).unwrap();
    assert_moments(&xs, &degenerate.bridge_marginal(0.5).unwrap(), 3.0);
}

#[test]
fn bridge_moments_at_intermediate_times() {
    let mut rng = seeded_rng(5);
    let p0 = GaussianDist::new(DVector::from_vec(vec![0.3, -0.7]), random_covariance(2, &mut rng)).unwrap();
    let p1 = GaussianDist::new(DVector::from_vec(vec![2.0, 1.0]), random_covariance(2, &mut rng)).unwrap();
    let plan = solve_gaussian_eot(&p0, &p1, 0.8).unwrap();
    for t in [0.2, 0.5, 0.9] {
        let xs = bridge_marginal_sample(&plan, t, 100_000, &mut rng).unwrap();
        assert_moments(&xs, &plan.bridge_marginal(t).unwrap(), 3.0);
    }
}

#[test]
fn bw2_examples() {
    let g = GaussianDist::standard(1);
    assert!(bw2_distance(&g, &g).unwrap().abs() < 1e-14);
    let shifted = GaussianDist::new(DVector::from_vec(vec![2.0]), DMatrix::identity(1, 1)).unwrap();
    assert!((bw2_distance(&g, &shifted).unwrap() - 4.0).abs() < 1e-14);
    assert!((bw2_distance(&g, &one_d(4.0)).unwrap() - 1.0).abs() < 1e-14);
}

#[test]
fn random_covariance_spectrum() {
    let mut rng = seeded_rng(6);
    for d in [1, 2, 5, 16] {
        let (q, lambda) = random_spectrum(d, &mut rng);
        assert!((q.transpose() * &q - DMatrix::identity(d, d)).amax() < 1e-10);
        assert!(lambda.iter().all(|&l| (0.5..=2.0).contains(&l)));
        let s = random_covariance(d, &mut rng);
        let eig = s.clone().symmetric_eigen().eigenvalues;
        assert!(eig.iter().all(|&l| (0.5 - 1e-12..=2.0 + 1e-12).contains(&l)), "{eig}");
    }
}

#[test]
fn instance_round_trip_is_bit_exact() {
    let mut rng = seeded_rng(7);
    let p0 = GaussianDist::centered(random_covariance(4, &mut rng)).unwrap();
    let p1 = GaussianDist::centered(random_covariance(4, &mut rng)).unwrap();
    let inst = GaussianInstance::new(&p0, &p1, 1.0, 7);
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("inst.json");
    inst.save(&path).unwrap();
    let back = GaussianInstance::load(&path).unwrap();
    assert_eq!(back, inst);
    let (q0, q1) = back.marginals().unwrap();
    assert_eq!(q0, p0);
    assert_eq!(q1, p1);
}

#[test]
fn gaussian_json_round_trip() {
    let g = GaussianDist::new(DVector::from_vec(vec![0.1, 0.2]), random_covariance(2, &mut seeded_rng(8))).unwrap();
    let back: GaussianDist = serde_json::from_str(&serde_json::to_string(&g).unwrap()).unwrap();
    assert_eq!(back, g);
}

fn arb_cov(d: usize) -> impl Strategy<Value = DMatrix<f64>> {
    any::<u64>().prop_map(move |s| random_covariance(d, &mut seeded_rng(s)))
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    /// The plan density is `exp((phi(x) + psi(y) - |x - y|^2 / 2) / eps)`,
    /// so the x-y block of the joint precision is `-I / eps`.
    #[test]
    fn plan_precision_cross_block(d in 1usize..5, eps in 0.05f64..5.0, a in arb_cov(4), b in arb_cov(4)) {
        let s0 = a.view((0, 0), (d, d)).into_owned();
        let s1 = b.view((0, 0), (d, d)).into_owned();
        let plan = solve_gaussian_eot(&GaussianDist::centered(s0).unwrap(), &GaussianDist::centered(s1).unwrap(), eps).unwrap();
        let prec = plan.joint().unwrap().cov().clone().try_inverse().unwrap();
        let block = prec.view((0, d), (d, d)).into_owned();
        let expected = DMatrix::<f64>::identity(d, d) * (-1.0 / eps);
        prop_assert!((block - expected).amax() < 1e-7 * (1.0 / eps).max(1.0));
    }

    #[test]
    fn sqrt_reconstructs(d in 1usize..9, s in any::<u64>()) {
        let m = random_covariance(d, &mut seeded_rng(s));
        let r = sym_sqrt(&m).unwrap();
        prop_assert!((&r * &r - &m).norm() / m.norm() < 1e-9);
    }

    #[test]
    fn bw_distance_triangle(d in 1usize..17, s in any::<u64>()) {
        let mut rng = seeded_rng(s);
        let mut g = || {
            let mean = DVector::from_fn(d, |_, _| rand::Rng::random_range(&mut rng, -1.0..1.0));
            GaussianDist::new(mean, random_covariance(d, &mut rng)).unwrap()
        };
        let (a, b, c) = (g(), g(), g());
        let w = |x: &GaussianDist, y: &GaussianDist| bw2_distance(x, y).unwrap().sqrt();
        prop_assert!(w(&a, &c) <= w(&a, &b) + w(&b, &c) + 1e-8);
        prop_assert!((bw2_distance(&a, &b).unwrap() - bw2_distance(&b, &a).unwrap()).abs() < 1e-8);
    }
}
