//! Fixtures shared by the integration tests.
#![allow(dead_code)]

use embedded_laplace::diagnostics::ess;
use embedded_laplace::error::Result;
use embedded_laplace::kernels::{Covariance, CovarianceModel, HorseshoeLinear, Intercept, Skim, SquaredExp, TapeKernel};
use embedded_laplace::laplace::{newton_solve, LaplaceConfig};
use embedded_laplace::sampler::TargetDensity;
use embedded_laplace::likelihoods::LikelihoodModel;
use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Poisson, StandardNormal};
use statrs::function::gamma::ln_gamma;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn normal_matrix(rows: usize, cols: usize, rng: &mut impl Rng) -> DMatrix<f64> {
    DMatrix::from_fn(rows, cols, |_, _| rng.sample(StandardNormal))
}

/// A latent model instance: likelihood, covariance and a hyperparameter point.
pub struct Fixture {
    pub name: &'static str,
    pub lik: LikelihoodModel,
    pub cov: CovarianceModel,
    pub phi: DVector<f64>,
}

pub fn tight() -> LaplaceConfig {
    LaplaceConfig {
        tolerance: 1e-12,
        ..Default::default()
    }
}

fn poisson_counts(rates: &[f64], rng: &mut impl Rng) -> Vec<f64> {
    rates
        .iter()
        .map(|&r| Poisson::new(r.max(1e-12)).unwrap().sample(rng))
        .collect()
}

/// Disease-map style: squared-exponential field on 2-d points, Poisson counts.
pub fn disease_map(n: usize, rng: &mut impl Rng) -> Fixture {
    let pts = DMatrix::from_fn(n, 2, |_, _| rng.random_range(0.0..1.0));
    let exposure: Vec<f64> = (0..n).map(|_| rng.random_range(0.5..3.0)).collect();
    let phi = DVector::from_vec(vec![rng.random_range(0.4..1.5), rng.random_range(0.2..1.0)]);
    let y = poisson_counts(&exposure, rng);
    Fixture {
        name: "squared-exp/poisson",
        lik: LikelihoodModel::poisson_log(&y, &vec![1; n], Some(&exposure)).unwrap(),
        cov: CovarianceModel::SquaredExp(SquaredExp::new(&pts).unwrap()),
        phi,
    }
}

fn horseshoe_phi(p: usize, extra: usize, rng: &mut impl Rng) -> DVector<f64> {
    DVector::from_fn(2 + extra + p, |i, _| {
        if i == 0 {
            rng.random_range(0.2..1.0)
        } else {
            rng.random_range(0.5..2.0)
        }
    })
}

fn binary_outcomes(n: usize, rng: &mut impl Rng) -> Vec<f64> {
    (0..n).map(|_| if rng.random::<f64>() < 0.5 { 1.0 } else { 0.0 }).collect()
}

/// Logistic regression under the regularized horseshoe.
pub fn sparse_glm(n: usize, p: usize, rng: &mut impl Rng) -> Fixture {
    let x = normal_matrix(n, p, rng);
    let y = binary_outcomes(n, rng);
    Fixture {
        name: "horseshoe/bernoulli",
        lik: LikelihoodModel::bernoulli_logit(&y, &vec![1; n]).unwrap(),
        cov: CovarianceModel::HorseshoeLinear(HorseshoeLinear::new(x, 2.0, 5.0, Intercept::Shared).unwrap()),
        phi: horseshoe_phi(p, 0, rng),
    }
}

/// Sparse kernel interaction model with Poisson outcomes.
pub fn skim_poisson(n: usize, p: usize, rng: &mut impl Rng) -> Fixture {
    let x = normal_matrix(n, p, rng) * 0.5;
    let y = poisson_counts(&vec![2.0; n], rng);
    Fixture {
        name: "skim/poisson",
        lik: LikelihoodModel::poisson_log(&y, &vec![1; n], None).unwrap(),
        cov: CovarianceModel::Skim(Skim::new(x, 2.0, 1.0).unwrap()),
        phi: horseshoe_phi(p, 1, rng),
    }
}

/// SKIM with Bernoulli outcomes.
pub fn skim_bernoulli(n: usize, p: usize, rng: &mut impl Rng) -> Fixture {
    let x = normal_matrix(n, p, rng) * 0.5;
    let y = binary_outcomes(n, rng);
    Fixture {
        name: "skim/bernoulli",
        lik: LikelihoodModel::bernoulli_logit(&y, &vec![1; n]).unwrap(),
        cov: CovarianceModel::Skim(Skim::new(x, 2.0, 1.0).unwrap()),
        phi: horseshoe_phi(p, 1, rng),
    }
}

/// The SKIM kernel recorded on the scalar tape.
pub fn skim_tape(n: usize, p: usize, rng: &mut impl Rng) -> Fixture {
    let x = normal_matrix(n, p, rng) * 0.5;
    let y = poisson_counts(&vec![2.0; n], rng);
    Fixture {
        name: "tape-skim/poisson",
        lik: LikelihoodModel::poisson_log(&y, &vec![1; n], None).unwrap(),
        cov: CovarianceModel::Tape(TapeKernel::skim(&x, 2.0, 1.0).unwrap()),
        phi: horseshoe_phi(p, 1, rng),
    }
}

/// Every fixture family at small size.
pub fn all_fixtures(rng: &mut impl Rng) -> Vec<Fixture> {
    vec![
        disease_map(12, rng),
        sparse_glm(10, 4, rng),
        skim_poisson(8, 3, rng),
        skim_bernoulli(8, 3, rng),
        skim_tape(6, 2, rng),
    ]
}

/// `log N(y; 0, S)` via Cholesky.
pub fn gaussian_log_density(y: &DVector<f64>, s: &DMatrix<f64>) -> f64 {
    let n = y.len() as f64;
    let c = s.clone().cholesky().expect("covariance must be positive definite");
    let alpha = c.solve(y);
    let log_det: f64 = c.l().diagonal().iter().map(|d| 2.0 * d.ln()).sum();
    -0.5 * y.dot(&alpha) - 0.5 * log_det - 0.5 * n * (2.0 * std::f64::consts::PI).ln()
}

pub fn rel_err(a: &DVector<f64>, b: &DVector<f64>) -> f64 {
    (a - b).amax() / (1.0 + b.amax())
}

pub fn jittered_slice(cov: &CovarianceModel, phi: &DVector<f64>, j: usize, jitter: f64) -> DMatrix<f64> {
    let mut s = cov.jacobian_slice(phi, j).unwrap();
    let bump = jitter * s.diagonal().mean();
    for i in 0..s.nrows() {
        s[(i, i)] += bump;
    }
    s
}

pub fn central_difference(f: &Fixture, cfg: &LaplaceConfig) -> DVector<f64> {
    DVector::from_fn(f.phi.len(), |j, _| {
        let h = 1e-5 * f.phi[j].abs().max(1e-2);
        let mut up = f.phi.clone();
        up[j] += h;
        let mut dn = f.phi.clone();
        dn[j] -= h;
        let lu = newton_solve(&f.lik, &f.cov, &up, cfg).unwrap().log_marginal;
        let ld = newton_solve(&f.lik, &f.cov, &dn, cfg).unwrap().log_marginal;
        (lu - ld) / (2.0 * h)
    })
}

/// Closed-form marginal `ȳ ~ N(0, K̃ + diag(σ²/n))` and its gradient.
pub fn gaussian_oracle(
    cov: &CovarianceModel,
    phi: &DVector<f64>,
    ybar: &DVector<f64>,
    noise: &DVector<f64>,
    jitter: f64,
) -> (f64, DVector<f64>) {
    let mut k = cov.evaluate(phi).unwrap();
    let bump = jitter * k.diagonal().mean();
    for i in 0..k.nrows() {
        k[(i, i)] += bump;
    }
    let s = k + DMatrix::from_diagonal(noise);
    let lm = gaussian_log_density(ybar, &s);
    let s_inv = s.try_inverse().unwrap();
    let alpha = &s_inv * ybar;
    let m = &alpha * alpha.transpose() - s_inv;
    let g = DVector::from_fn(phi.len(), |j, _| 0.5 * m.component_mul(&jittered_slice(cov, phi, j, jitter)).sum());
    (lm, g)
}

/// Log of `∫ π(y | θ) N(θ; 0, K) dθ` for `n = 2` by a trapezoid grid in
/// coordinates standardized around the mode.
pub fn quadrature_log_marginal(y: &[f64], e: &[f64], k: &DMatrix<f64>, center: &DVector<f64>, scale: &DMatrix<f64>) -> f64 {
    let chol = k.clone().cholesky().unwrap();
    let k_inv = chol.inverse();
    let log_det_k = 2.0 * chol.l().diagonal().iter().map(|d| d.ln()).sum::<f64>();
    let l = scale.clone().cholesky().unwrap().l();
    let log_det_l = l.diagonal().iter().map(|d| d.ln()).sum::<f64>();
    let h = 0.05;
    let m = 240i32;
    let mut terms = Vec::with_capacity(((2 * m + 1) * (2 * m + 1)) as usize);
    for a in -m..=m {
        for b in -m..=m {
            let t = DVector::from_vec(vec![a as f64 * h, b as f64 * h]);
            let theta = center + &l * t;
            let mut lp = -0.5 * theta.dot(&(&k_inv * &theta)) - 0.5 * log_det_k - (2.0 * std::f64::consts::PI).ln();
            for i in 0..2 {
                let rate = e[i] * theta[i].exp();
                lp += y[i] * rate.ln() - rate - ln_gamma(y[i] + 1.0);
            }
            terms.push(lp);
        }
    }
    let mx = terms.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    mx + terms.iter().map(|v| (v - mx).exp()).sum::<f64>().ln() + 2.0 * h.ln() + log_det_l
}

/// Known-moment targets for sampler calibration.
/// Independent Gaussian with per-coordinate standard deviations.
pub struct Diagonal(pub Vec<f64>);

impl TargetDensity for Diagonal {
    fn dim(&self) -> usize {
        self.0.len()
    }
    fn log_density_gradient(&self, x: &[f64], g: &mut [f64]) -> Result<f64> {
        let mut lp = 0.0;
        for i in 0..x.len() {
            let v = self.0[i] * self.0[i];
            lp -= 0.5 * x[i] * x[i] / v;
            g[i] = -x[i] / v;
        }
        Ok(lp)
    }
}

/// Bivariate Gaussian with correlation `r`.
pub struct Correlated(pub f64);

impl TargetDensity for Correlated {
    fn dim(&self) -> usize {
        2
    }
    fn log_density_gradient(&self, x: &[f64], g: &mut [f64]) -> Result<f64> {
        let r = self.0;
        let d = 1.0 - r * r;
        g[0] = -(x[0] - r * x[1]) / d;
        g[1] = -(x[1] - r * x[0]) / d;
        Ok(-0.5 * (x[0] * x[0] - 2.0 * r * x[0] * x[1] + x[1] * x[1]) / d)
    }
}

pub fn moments_within_mcse(chains: &[Vec<f64>], mean: f64, var: f64) {
    let pooled: Vec<f64> = chains.iter().flatten().copied().collect();
    let n = pooled.len() as f64;
    let m = pooled.iter().sum::<f64>() / n;
    let ess_m = ess(chains).unwrap().unwrap();
    let mcse_m = (var / ess_m).sqrt();
    assert!((m - mean).abs() < 3.0 * mcse_m, "mean {m}, mcse {mcse_m}");

    let sq: Vec<Vec<f64>> = chains.iter().map(|c| c.iter().map(|x| (x - m) * (x - m)).collect()).collect();
    let v = pooled.iter().map(|x| (x - m) * (x - m)).sum::<f64>() / (n - 1.0);
    let ess_v = ess(&sq).unwrap().unwrap();
    let sd_sq = {
        let flat: Vec<f64> = sq.iter().flatten().copied().collect();
        let mu = flat.iter().sum::<f64>() / n;
        (flat.iter().map(|s| (s - mu) * (s - mu)).sum::<f64>() / (n - 1.0)).sqrt()
    };
    let mcse_v = sd_sq / ess_v.sqrt();
    assert!((v - var).abs() < 3.0 * mcse_v, "variance {v}, mcse {mcse_v}");
}

