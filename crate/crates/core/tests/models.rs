mod common;

use common::*;
use embedded_laplace::kernels::{CovarianceModel, Intercept, SquaredExp};
use embedded_laplace::laplace::{newton_solve, posterior_covariance, LaplaceConfig};
use embedded_laplace::likelihoods::LikelihoodModel;
use embedded_laplace::models::{
    recover_latents, unconstrained_target, FullJointTarget, GpPriors, HorseshoeConstants, LaplaceTarget, ModelSpec,
    ParamSpec, Prior, TargetKind,
};
use embedded_laplace::sampler::TargetDensity;
use nalgebra::{DMatrix, DVector};
use rand::Rng;

fn eval<T: TargetDensity>(t: &T, x: &[f64]) -> (f64, Vec<f64>) {
    let mut g = vec![0.0; x.len()];
    let lp = t.log_density_gradient(x, &mut g).unwrap();
    (lp, g)
}

fn fd_gradient<T: TargetDensity>(t: &T, x: &[f64]) -> Vec<f64> {
    (0..x.len())
        .map(|j| {
            let h = 1e-5;
            let mut up = x.to_vec();
            up[j] += h;
            let mut dn = x.to_vec();
            dn[j] -= h;
            (eval(t, &up).0 - eval(t, &dn).0) / (2.0 * h)
        })
        .collect()
}

fn assert_close(a: &[f64], b: &[f64], tol: f64, what: &str) {
    let scale = 1.0 + b.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    let err = a.iter().zip(b).fold(0.0f64, |m, (x, y)| m.max((x - y).abs()));
    assert!(err / scale <= tol, "{what}: relative error {}", err / scale);
}

fn disease_spec(n: usize, rng: &mut impl Rng, laplace: LaplaceConfig) -> ModelSpec {
    let f = disease_map(n, rng);
    ModelSpec::new(f.lik, f.cov, squared_exp_priors(), laplace).unwrap()
}

fn squared_exp_priors() -> Vec<ParamSpec> {
    vec![
        ParamSpec::new("alpha", Prior::InvGamma { shape: 2.0, scale: 2.0 }),
        ParamSpec::new("rho", Prior::InvGamma { shape: 2.0, scale: 2.0 }),
    ]
}

fn glm_spec(rng: &mut impl Rng) -> ModelSpec {
    let f = sparse_glm(12, 5, rng);
    let CovarianceModel::HorseshoeLinear(h) = f.cov else { unreachable!() };
    let constants = HorseshoeConstants { p0: 2.0, ..Default::default() };
    ModelSpec::sparse_glm(f.lik, h.design().clone(), constants, Intercept::Shared, tight()).unwrap()
}

fn skim_spec(rng: &mut impl Rng) -> ModelSpec {
    let f = skim_poisson(8, 4, rng);
    let CovarianceModel::Skim(s) = f.cov else { unreachable!() };
    let constants = HorseshoeConstants { p0: 2.0, intercept_sd: 1.0, ..Default::default() };
    ModelSpec::skim(f.lik, s.design().clone(), constants, tight()).unwrap()
}

#[test]
fn laplace_target_gradient_matches_finite_differences() {
    let mut r = rng(30);
    let specs = [disease_spec(10, &mut r, tight()), glm_spec(&mut r), skim_spec(&mut r)];
    for spec in &specs {
        let t = LaplaceTarget::new(spec).unwrap();
        for _ in 0..7 {
            let u: Vec<f64> = (0..spec.dim()).map(|_| r.random_range(-1.0..0.5)).collect();
            let (_, g) = eval(&t, &u);
            assert_close(&g, &fd_gradient(&t, &u), 1e-5, "laplace target");
        }
    }
}

#[test]
fn full_joint_gradient_matches_finite_differences() {
    let mut r = rng(31);
    let specs = [disease_spec(6, &mut r, tight()), glm_spec(&mut r), skim_spec(&mut r)];
    for spec in &specs {
        let t = FullJointTarget::new(spec).unwrap();
        for _ in 0..5 {
            let x: Vec<f64> = (0..t.dim()).map(|_| r.random_range(-1.0..0.5)).collect();
            let (_, g) = eval(&t, &x);
            assert_close(&g, &fd_gradient(&t, &x), 1e-5, "full-joint target");
        }
    }
}

/// With a Gaussian likelihood, `log p(u, z) − log p(z | u, y)` must equal the
/// Laplace target at `u` for every `z`.
#[test]
fn gaussian_full_joint_marginalizes_to_laplace_target() {
    let mut r = rng(32);
    for _ in 0..10 {
        let n = 5;
        let pts = DMatrix::from_fn(n, 2, |_, _| r.random_range(0.0..1.0));
        let counts: Vec<u32> = (0..n).map(|_| r.random_range(1..3)).collect();
        let sums: Vec<f64> = (0..n).map(|_| r.random_range(-2.0..2.0)).collect();
        let sigma = r.random_range(0.3..1.5);
        let lik = LikelihoodModel::gaussian_test(&sums, &counts, sigma).unwrap();
        let spec = ModelSpec::squared_exp(lik.clone(), &pts, GpPriors::default(), LaplaceConfig::default()).unwrap();
        let lap = LaplaceTarget::new(&spec).unwrap();
        let full = FullJointTarget::new(&spec).unwrap();

        let u = vec![r.random_range(-0.5..0.5), r.random_range(-1.0..0.0)];
        let phi = spec.constrain(&u);
        let k = newton_solve(&lik, &spec.covariance, &phi, &spec.laplace).unwrap().k;
        let l = k.cholesky().unwrap().l();
        let d = DVector::from_iterator(n, counts.iter().map(|&c| c as f64 / (sigma * sigma)));
        let ybar = DVector::from_iterator(n, sums.iter().zip(&counts).map(|(s, &c)| s / c as f64));
        // z | u, y ~ N(P⁻¹ Lᵀ D ȳ, P⁻¹) with P = I + Lᵀ D L.
        let p = DMatrix::identity(n, n) + l.transpose() * DMatrix::from_diagonal(&d) * &l;
        let p_inv = p.try_inverse().unwrap();
        let m = &p_inv * l.transpose() * d.component_mul(&ybar);

        let z = DVector::from_fn(n, |_, _| r.random_range(-1.0..1.0));
        let x: Vec<f64> = u.iter().copied().chain(z.iter().copied()).collect();
        let joint = eval(&full, &x).0;
        let cond = gaussian_log_density(&(&z - &m), &p_inv);
        let laplace = eval(&lap, &u).0;
        assert!((joint - cond - laplace).abs() < 1e-8, "{} vs {laplace}", joint - cond);
    }
}

#[test]
fn one_newton_solve_per_evaluation() {
    let mut r = rng(33);
    let spec = disease_spec(8, &mut r, LaplaceConfig::default());
    let t = LaplaceTarget::new(&spec).unwrap();
    for _ in 0..15 {
        let u = vec![r.random_range(-1.0..1.0), r.random_range(-1.0..1.0)];
        eval(&t, &u);
    }
    assert_eq!(t.evaluations(), 15);
    assert_eq!(t.newton_solves(), 15);
}

#[test]
fn newton_failure_rejects_the_point() {
    let mut r = rng(34);
    let cfg = LaplaceConfig { max_iterations: 1, ..Default::default() };
    let spec = disease_spec(8, &mut r, cfg);
    let t = unconstrained_target(&spec, TargetKind::Laplace).unwrap();
    let mut g = vec![0.0; 2];
    assert_eq!(t.log_density_gradient(&[0.0, 0.0], &mut g).unwrap(), f64::NEG_INFINITY);
    // Overflowing scales are rejected too, not reported as errors.
    assert_eq!(t.log_density_gradient(&[800.0, 0.0], &mut g).unwrap(), f64::NEG_INFINITY);
}

#[test]
fn prior_log_density_sums_components() {
    let mut r = rng(35);
    let spec = glm_spec(&mut r);
    let phi: Vec<f64> = (0..spec.dim()).map(|_| r.random_range(0.1..2.0)).collect();
    let direct: f64 = spec.params.iter().zip(&phi).map(|(p, &x)| p.prior.log_density(x)).sum();
    assert_eq!(spec.prior_log_density(&phi).unwrap(), direct);
    let n = 12.0f64;
    let Prior::PositiveStudentT { scale, .. } = spec.params[0].prior else { panic!() };
    assert!((scale - 2.0 / (n.sqrt() * 3.0)).abs() < 1e-15);
}

#[test]
fn layout_mismatch_is_rejected() {
    let mut r = rng(36);
    let f = disease_map(4, &mut r);
    let bad = ModelSpec::new(
        f.lik,
        f.cov,
        vec![ParamSpec::new("alpha", Prior::InvGamma { shape: 2.0, scale: 2.0 })],
        LaplaceConfig::default(),
    );
    assert!(bad.is_err());
}

#[test]
fn recovered_latents_match_the_gaussian_posterior() {
    let mut r = rng(37);
    let n = 3;
    let pts = DMatrix::from_fn(n, 2, |_, _| r.random_range(0.0..1.0));
    let lik = LikelihoodModel::gaussian_test(&[1.0, -0.5, 2.0], &[1, 2, 1], 0.8).unwrap();
    let spec = ModelSpec::squared_exp(lik.clone(), &pts, GpPriors::default(), LaplaceConfig::default()).unwrap();
    let phi = DMatrix::from_fn(20_000, 2, |_, j| if j == 0 { 1.1 } else { 0.6 });
    let draws = recover_latents(&spec, &phi, &mut rng(1)).unwrap();
    assert_eq!(draws.shape(), (20_000, n));

    let cov = CovarianceModel::SquaredExp(SquaredExp::new(&pts).unwrap());
    let state = newton_solve(&lik, &cov, &DVector::from_vec(vec![1.1, 0.6]), &spec.laplace).unwrap();
    let sigma = posterior_covariance(&state);
    for i in 0..n {
        let col = draws.column(i);
        let mean = col.mean();
        let var = col.variance() * 20_000.0 / 19_999.0;
        let se_mean = (sigma[(i, i)] / 20_000.0).sqrt();
        let se_var = sigma[(i, i)] * (2.0 / 19_999.0f64).sqrt();
        assert!((mean - state.theta[i]).abs() < 3.0 * se_mean);
        assert!((var - sigma[(i, i)]).abs() < 3.0 * se_var);
    }

    assert_eq!(recover_latents(&spec, &DMatrix::zeros(0, 2), &mut rng(1)).unwrap().nrows(), 0);
    let again = recover_latents(&spec, &phi.rows(0, 10).into_owned(), &mut rng(1)).unwrap();
    assert_eq!(again, draws.rows(0, 10).into_owned());
}
