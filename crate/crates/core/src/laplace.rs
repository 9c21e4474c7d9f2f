//! Embedded Laplace approximation of `log π(y | φ)`.
//!
//! [`newton_solve`] finds the mode `θ*` of `log π(y | θ) − ½ θᵀK⁻¹θ` and keeps
//! the factorization from its final step. Two routes differentiate the
//! resulting approximate log marginal with respect to `φ`:
//!
//! * [`grad_reference`] loops over hyperparameters and needs one explicit
//!   `∂K/∂φ_j` per coordinate.
//! * [`grad_adjoint`] builds a single cotangent matrix `w` (see
//!   [`adjoint_cotangent`]) and contracts it with `∂K/∂φ` in one pullback.
//!
//! Both treat the jitter added to `K` as part of the covariance, so they
//! differentiate exactly the quantity reported by [`log_marginal`].
//!
//! `K⁻¹` is never formed; every inverse goes through `L` and `W^{1/2}`.

use nalgebra::{Cholesky, DMatrix, DVector, Dyn};
use rand::Rng;
use rand_distr::StandardNormal;

use crate::error::{check_len, Error, Result};
use crate::kernels::{Covariance, SweepCounter};
use crate::likelihoods::LikelihoodModel;

/// Relative diagonal jitter: `K + jitter · mean(diag K) · I`.
pub const DEFAULT_JITTER: f64 = 1e-8;

#[derive(Debug, Clone)]
pub struct LaplaceConfig {
    /// Convergence threshold on the change of the Newton objective.
    pub tolerance: f64,
    pub max_iterations: usize,
    /// Initial guess; `None` starts at the prior mean (zero).
    pub theta0: Option<DVector<f64>>,
    pub jitter: f64,
}

impl Default for LaplaceConfig {
    fn default() -> Self {
        Self {
            tolerance: 1e-6,
            max_iterations: 100,
            theta0: None,
            jitter: DEFAULT_JITTER,
        }
    }
}

impl LaplaceConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.tolerance > 0.0) {
            return Err(Error::config("laplace.tolerance", "must be > 0"));
        }
        if self.max_iterations < 1 {
            return Err(Error::config("laplace.max_iterations", "must be >= 1"));
        }
        if !(self.jitter >= 0.0) {
            return Err(Error::config("laplace.jitter", "must be >= 0"));
        }
        Ok(())
    }
}

/// Converged Newton state, reused by the gradients and the conditional sampler.
#[derive(Debug, Clone)]
pub struct NewtonState {
    /// Mode `θ*`.
    pub theta: DVector<f64>,
    /// Covariance at `φ`, jitter included.
    pub k: DMatrix<f64>,
    /// Diagonal of `W^{1/2}` at `θ*`.
    pub w_sqrt: DVector<f64>,
    /// Lower Cholesky factor of `I + W^{1/2} K W^{1/2}`.
    pub l: DMatrix<f64>,
    /// `θ* = K a`.
    pub a: DVector<f64>,
    pub log_marginal: f64,
    pub iterations: usize,
    pub converged: bool,
    /// Newton objective after each iteration.
    pub objective_trace: Vec<f64>,
    /// Absolute jitter that was added to the diagonal of `K`.
    pub jitter: f64,
    /// Relative jitter policy used to build `k`.
    pub relative_jitter: f64,
}

/// Gradient of the approximate log marginal plus the number of kernel
/// derivative sweeps spent computing it.
#[derive(Debug, Clone)]
pub struct HyperGradient {
    pub gradient: DVector<f64>,
    pub kernel_sweeps: usize,
}

pub(crate) fn jittered(k: DMatrix<f64>, relative: f64) -> (DMatrix<f64>, f64) {
    let n = k.nrows();
    let amount = relative * k.diagonal().mean();
    let mut k = k;
    for i in 0..n {
        k[(i, i)] += amount;
    }
    (k, amount)
}

/// `L = chol(I + W^{1/2} K W^{1/2})`.
fn factor_b(k: &DMatrix<f64>, w_sqrt: &DVector<f64>) -> Option<DMatrix<f64>> {
    let n = k.nrows();
    let b = DMatrix::from_fn(n, n, |i, j| {
        let v = w_sqrt[i] * k[(i, j)] * w_sqrt[j];
        if i == j {
            1.0 + v
        } else {
            v
        }
    });
    Cholesky::<f64, Dyn>::new(b).map(|c| c.unpack())
}

fn sqrt_w(w: &DVector<f64>) -> DVector<f64> {
    w.map(|v| v.max(0.0).sqrt())
}

/// Newton objective `log π(y | θ) − ½ aᵀθ` with `θ = K a`.
fn objective(lik: &LikelihoodModel, theta: &DVector<f64>, a: &DVector<f64>) -> Result<f64> {
    Ok(lik.log_density(theta)? - 0.5 * a.dot(theta))
}

/// Finds the mode of `π(θ | y, φ)` by Newton's method and returns the state
/// of the final step together with the approximate log marginal.
pub fn newton_solve<C: Covariance + ?Sized>(
    lik: &LikelihoodModel,
    cov: &C,
    phi: &DVector<f64>,
    config: &LaplaceConfig,
) -> Result<NewtonState> {
    config.validate()?;
    let n = cov.n();
    check_len("likelihood", lik.dim(), n)?;
    let (k, jitter) = jittered(cov.evaluate(phi)?, config.jitter);

    let mut theta = match &config.theta0 {
        Some(t0) => {
            check_len("theta0", t0.len(), n)?;
            t0.clone()
        }
        None => DVector::zeros(n),
    };
    let mut a = DVector::zeros(n);
    let mut previous: Option<f64> = None;
    let mut trace = Vec::new();
    let mut converged = false;
    let mut last_change = f64::INFINITY;
    let mut iterations = 0;

    while iterations < config.max_iterations {
        iterations += 1;
        let w = lik.neg_hessian_diag(&theta)?;
        let w_sqrt = sqrt_w(&w);
        let l = factor_b(&k, &w_sqrt).ok_or(Error::Cholesky {
            iteration: Some(iterations),
        })?;
        let b = w.component_mul(&theta) + lik.grad(&theta)?;
        let rhs = w_sqrt.component_mul(&(&k * &b));
        let z = l.solve_lower_triangular(&rhs).expect("L has a positive diagonal");
        let z = l
            .tr_solve_lower_triangular(&z)
            .expect("L has a positive diagonal");
        a = b - w_sqrt.component_mul(&z);
        theta = &k * &a;

        let obj = objective(lik, &theta, &a)?;
        if !obj.is_finite() {
            return Err(Error::domain(format!(
                "Newton objective became non-finite at iteration {iterations}"
            )));
        }
        trace.push(obj);
        if let Some(prev) = previous {
            last_change = (obj - prev).abs();
            if last_change <= config.tolerance {
                converged = true;
                break;
            }
        }
        previous = Some(obj);
    }

    // Refresh W and L at the final iterate so the stored factorization is
    // the one at θ*.
    let w = lik.neg_hessian_diag(&theta)?;
    let w_sqrt = sqrt_w(&w);
    let l = factor_b(&k, &w_sqrt).ok_or(Error::Cholesky {
        iteration: Some(iterations),
    })?;
    let log_det_half: f64 = l.diagonal().iter().map(|d| d.ln()).sum();
    let log_marginal = -0.5 * a.dot(&theta) + lik.log_density(&theta)? - log_det_half;

    let state = NewtonState {
        theta,
        k,
        w_sqrt,
        l,
        a,
        log_marginal,
        iterations,
        converged,
        objective_trace: trace,
        jitter,
        relative_jitter: config.jitter,
    };
    if !converged {
        return Err(Error::NonConvergence {
            iterations,
            last_change,
            state: Box::new(state),
        });
    }
    Ok(state)
}

/// Approximate log marginal `log π_G(y | φ)` stored in a converged state.
pub fn log_marginal(state: &NewtonState) -> f64 {
    state.log_marginal
}

/// Quantities shared by both gradient routes: `R = W^{1/2}B⁻¹W^{1/2}`, `s₂`
/// and `∇ log π(y|θ*)`.
struct GradientParts {
    r: DMatrix<f64>,
    s2: DVector<f64>,
    lik_grad: DVector<f64>,
}

fn require_converged(state: &NewtonState) -> Result<()> {
    if !state.converged {
        return Err(Error::contract("gradient requested on a non-converged Newton state"));
    }
    Ok(())
}

fn gradient_parts(state: &NewtonState, lik: &LikelihoodModel) -> Result<GradientParts> {
    require_converged(state)?;
    check_len("likelihood", lik.dim(), state.theta.len())?;
    let n = state.theta.len();
    let l = &state.l;
    // R = W^{1/2} Lᵀ \ (L \ W^{1/2}) = (L⁻¹W^{1/2})ᵀ (L⁻¹W^{1/2})
    let m = l
        .solve_lower_triangular(&DMatrix::from_diagonal(&state.w_sqrt))
        .expect("L has a positive diagonal");
    let r = m.transpose() * &m;
    // C = L \ (W^{1/2} K)
    let mut wk = state.k.clone();
    for i in 0..n {
        wk.row_mut(i).scale_mut(state.w_sqrt[i]);
    }
    let c = l.solve_lower_triangular(&wk).expect("L has a positive diagonal");
    // s₂ = ½ diag(Σ*) ∘ ∇³log π(y|θ*), the implicit derivative of −½log|B|
    // through W(θ*), with Σ* = K − CᵀC.
    let third = lik.third_deriv_diag(&state.theta)?;
    let s2 = DVector::from_fn(n, |i, _| {
        let ctc_ii = c.column(i).norm_squared();
        0.5 * (state.k[(i, i)] - ctc_ii) * third[i]
    });
    Ok(GradientParts {
        r,
        s2,
        lik_grad: lik.grad(&state.theta)?,
    })
}

/// Adds the derivative of the relative jitter to a Jacobian slice.
fn jitter_slice(slice: DMatrix<f64>, relative: f64) -> DMatrix<f64> {
    if relative == 0.0 {
        return slice;
    }
    let (s, _) = jittered(slice, relative);
    s
}

/// Folds the relative jitter into a cotangent: `w + (jitter/n) tr(w) I`.
pub(crate) fn jitter_cotangent(mut w: DMatrix<f64>, relative: f64) -> DMatrix<f64> {
    let n = w.nrows();
    if relative == 0.0 || n == 0 {
        return w;
    }
    let bump = relative * w.trace() / n as f64;
    for i in 0..n {
        w[(i, i)] += bump;
    }
    w
}

/// Gradient by explicit per-hyperparameter Jacobian slices.
pub fn grad_reference<C: Covariance + ?Sized>(
    state: &NewtonState,
    lik: &LikelihoodModel,
    cov: &C,
    phi: &DVector<f64>,
) -> Result<HyperGradient> {
    let parts = gradient_parts(state, lik)?;
    let counter = SweepCounter::new(cov);
    let p = cov.n_params();
    let a = &state.a;
    let kr = &state.k * &parts.r;
    let mut gradient = DVector::zeros(p);
    for j in 0..p {
        let dk = jitter_slice(counter.jacobian_slice(phi, j)?, state.relative_jitter);
        let s1 = 0.5 * a.dot(&(&dk * a)) - 0.5 * parts.r.component_mul(&dk).sum();
        let b = &dk * &parts.lik_grad;
        let s3 = &b - &kr * &b;
        gradient[j] = s1 + parts.s2.dot(&s3);
    }
    Ok(HyperGradient {
        gradient,
        kernel_sweeps: counter.slices() + counter.pullbacks(),
    })
}

/// Cotangent `w` with `∇_φ log π_G(y | φ) = Σ_ij w_ij ∂K_ij/∂φ`:
///
/// ```text
/// w = ½ aaᵀ − ½ R + (s₂ − R K s₂) ∇log π(y | θ*)ᵀ
/// ```
///
/// The rank-one term is left unsymmetrized.
pub fn adjoint_cotangent(state: &NewtonState, lik: &LikelihoodModel) -> Result<DMatrix<f64>> {
    let parts = gradient_parts(state, lik)?;
    Ok(cotangent_from(state, &parts))
}

fn cotangent_from(state: &NewtonState, parts: &GradientParts) -> DMatrix<f64> {
    let a = &state.a;
    let u = &parts.s2 - &parts.r * (&state.k * &parts.s2);
    a * a.transpose() * 0.5 - &parts.r * 0.5 + u * parts.lik_grad.transpose()
}

/// Gradient by one pullback of the adjoint cotangent through `K(φ)`.
pub fn grad_adjoint<C: Covariance + ?Sized>(
    state: &NewtonState,
    lik: &LikelihoodModel,
    cov: &C,
    phi: &DVector<f64>,
) -> Result<HyperGradient> {
    let parts = gradient_parts(state, lik)?;
    let w = jitter_cotangent(cotangent_from(state, &parts), state.relative_jitter);
    let counter = SweepCounter::new(cov);
    let gradient = counter.pullback(phi, &w)?;
    Ok(HyperGradient {
        gradient,
        kernel_sweeps: counter.slices() + counter.pullbacks(),
    })
}

/// Covariance of the Gaussian approximation,
/// `Σ* = K − K W^{1/2} (I + W^{1/2} K W^{1/2})⁻¹ W^{1/2} K`.
pub fn posterior_covariance(state: &NewtonState) -> DMatrix<f64> {
    let n = state.theta.len();
    let mut wk = state.k.clone();
    for i in 0..n {
        wk.row_mut(i).scale_mut(state.w_sqrt[i]);
    }
    let c = state
        .l
        .solve_lower_triangular(&wk)
        .expect("L has a positive diagonal");
    let s = &state.k - c.transpose() * c;
    (&s + s.transpose()) * 0.5
}

/// Draws `θ ~ N(θ*, Σ*)` from the Gaussian approximation of `π(θ | y, φ)`.
pub fn sample_conditional<R: Rng + ?Sized>(state: &NewtonState, rng: &mut R) -> Result<DVector<f64>> {
    require_converged(state)?;
    let (sigma, _) = jittered(posterior_covariance(state), state.relative_jitter);
    let chol = Cholesky::new(sigma).ok_or(Error::Cholesky { iteration: None })?;
    let n = state.theta.len();
    let z = DVector::from_fn(n, |_, _| rng.sample::<f64, _>(StandardNormal));
    Ok(&state.theta + chol.l() * z)
}

/// Convenience: solve, then return the log marginal and its adjoint gradient.
pub fn marginal_with_gradient<C: Covariance + ?Sized>(
    lik: &LikelihoodModel,
    cov: &C,
    phi: &DVector<f64>,
    config: &LaplaceConfig,
) -> Result<(f64, DVector<f64>, NewtonState)> {
    let state = newton_solve(lik, cov, phi, config)?;
    let g = grad_adjoint(&state, lik, cov, phi)?;
    Ok((state.log_marginal, g.gradient, state))
}
