use std::sync::atomic::{AtomicUsize, Ordering};

use nalgebra::{Cholesky, DMatrix, DVector};
use serde::{Deserialize, Serialize};

use super::ModelSpec;
use crate::error::{Error, Result};
use crate::kernels::Covariance;
use crate::laplace::{grad_adjoint, jitter_cotangent, jittered, newton_solve};
use crate::sampler::TargetDensity;

/// Which posterior to sample.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum TargetKind {
    /// `φ` alone, with `θ` integrated out by the embedded Laplace approximation.
    Laplace,
    /// `(φ, z)` with `θ = chol(K) z`, sampled jointly.
    #[serde(alias = "full")]
    FullJoint,
}

/// Errors that make a point unusable rather than the run invalid.
fn is_rejection(e: &Error) -> bool {
    matches!(
        e,
        Error::NonConvergence { .. } | Error::Cholesky { .. } | Error::Domain(_)
    )
}

/// Prior, log-Jacobian and chain-rule bookkeeping shared by both targets.
/// Returns `φ`, the prior-plus-Jacobian term, its gradient in `u`, and `dφ/du`.
fn transformed_prior(spec: &ModelSpec, u: &[f64]) -> (DVector<f64>, f64, Vec<f64>, Vec<f64>) {
    let phi = spec.constrain(u);
    let mut lp = 0.0;
    let mut grad = vec![0.0; u.len()];
    let mut dphi = vec![0.0; u.len()];
    for (j, p) in spec.params.iter().enumerate() {
        let t = p.transform;
        dphi[j] = t.derivative(u[j]);
        lp += p.prior.log_density(phi[j]) + t.log_jacobian(u[j]);
        grad[j] = p.prior.grad(phi[j]) * dphi[j] + t.log_jacobian_grad(u[j]);
    }
    (phi, lp, grad, dphi)
}

/// `log π_G(y | φ(u)) + log π(φ(u)) + log |dφ/du|` with its adjoint gradient.
#[derive(Debug)]
pub struct LaplaceTarget<'a> {
    spec: &'a ModelSpec,
    evaluations: AtomicUsize,
    solves: AtomicUsize,
    rejections: AtomicUsize,
}

impl<'a> LaplaceTarget<'a> {
    pub fn new(spec: &'a ModelSpec) -> Result<Self> {
        spec.validate()?;
        Ok(Self {
            spec,
            evaluations: AtomicUsize::new(0),
            solves: AtomicUsize::new(0),
            rejections: AtomicUsize::new(0),
        })
    }

    pub fn evaluations(&self) -> usize {
        self.evaluations.load(Ordering::Relaxed)
    }

    pub fn newton_solves(&self) -> usize {
        self.solves.load(Ordering::Relaxed)
    }

    /// Evaluations that returned `−∞` because the inner problem failed.
    pub fn rejections(&self) -> usize {
        self.rejections.load(Ordering::Relaxed)
    }

    fn evaluate(&self, u: &[f64], grad: &mut [f64]) -> Result<f64> {
        let spec = self.spec;
        let (phi, lp_prior, g_prior, dphi) = transformed_prior(spec, u);
        if !lp_prior.is_finite() {
            return Ok(f64::NEG_INFINITY);
        }
        self.solves.fetch_add(1, Ordering::Relaxed);
        let state = newton_solve(&spec.likelihood, &spec.covariance, &phi, &spec.laplace)?;
        let g = grad_adjoint(&state, &spec.likelihood, &spec.covariance, &phi)?.gradient;
        for j in 0..u.len() {
            grad[j] = g[j] * dphi[j] + g_prior[j];
        }
        Ok(state.log_marginal + lp_prior)
    }
}

impl TargetDensity for LaplaceTarget<'_> {
    fn dim(&self) -> usize {
        self.spec.dim()
    }

    fn log_density_gradient(&self, u: &[f64], grad: &mut [f64]) -> Result<f64> {
        crate::error::check_len("point", u.len(), self.dim())?;
        crate::error::check_len("gradient", grad.len(), self.dim())?;
        self.evaluations.fetch_add(1, Ordering::Relaxed);
        match self.evaluate(u, grad) {
            Err(e) if is_rejection(&e) => {
                self.rejections.fetch_add(1, Ordering::Relaxed);
                Ok(f64::NEG_INFINITY)
            }
            other => other,
        }
    }

    fn param_names(&self) -> Vec<String> {
        self.spec.param_names()
    }

    fn constrain(&self, u: &[f64]) -> Vec<f64> {
        self.spec.constrain(u).iter().copied().collect()
    }
}

/// Joint density of `(u, z)` with `θ = L z`, `L = chol(K(φ(u)))`:
/// `log π(y | θ) + log N(z; 0, I) + log π(φ) + log |dφ/du|`.
///
/// Recorded draws are `φ` followed by `θ`.
#[derive(Debug)]
pub struct FullJointTarget<'a> {
    spec: &'a ModelSpec,
}

impl<'a> FullJointTarget<'a> {
    pub fn new(spec: &'a ModelSpec) -> Result<Self> {
        spec.validate()?;
        Ok(Self { spec })
    }

    fn n_latent(&self) -> usize {
        self.spec.covariance.n()
    }

    fn factor(&self, phi: &DVector<f64>) -> Result<DMatrix<f64>> {
        let (k, _) = jittered(self.spec.covariance.evaluate(phi)?, self.spec.laplace.jitter);
        Ok(Cholesky::new(k)
            .ok_or(Error::Cholesky { iteration: None })?
            .unpack())
    }

    fn evaluate(&self, x: &[f64], grad: &mut [f64]) -> Result<f64> {
        let spec = self.spec;
        let p = spec.dim();
        let n = self.n_latent();
        let (u, z) = x.split_at(p);
        let (phi, lp_prior, g_prior, dphi) = transformed_prior(spec, u);
        if !lp_prior.is_finite() {
            return Ok(f64::NEG_INFINITY);
        }
        let l = self.factor(&phi)?;
        let z = DVector::from_column_slice(z);
        let theta = &l * &z;
        let lik = &spec.likelihood;
        let lp = lik.log_density(&theta)? - 0.5 * z.norm_squared()
            - 0.5 * n as f64 * (2.0 * std::f64::consts::PI).ln()
            + lp_prior;

        let g_theta = lik.grad(&theta)?;
        // ∂/∂z = Lᵀ g_θ − z
        let g_z = l.tr_mul(&g_theta) - &z;
        // Reverse-mode Cholesky: L̄ = g_θ zᵀ, K̄ = sym(L⁻ᵀ Φ(LᵀL̄) L⁻¹) with Φ
        // taking the lower triangle and halving the diagonal.
        let l_bar = &g_theta * z.transpose();
        let mut phi_mat = l.tr_mul(&l_bar);
        for i in 0..n {
            phi_mat[(i, i)] *= 0.5;
            for j in i + 1..n {
                phi_mat[(i, j)] = 0.0;
            }
        }
        let t = l
            .tr_solve_lower_triangular(&phi_mat)
            .expect("L has a positive diagonal");
        let s = l
            .tr_solve_lower_triangular(&t.transpose())
            .expect("L has a positive diagonal")
            .transpose();
        let w = jitter_cotangent((&s + s.transpose()) * 0.5, spec.laplace.jitter);
        let g_phi = spec.covariance.pullback(&phi, &w)?;

        for j in 0..p {
            grad[j] = g_phi[j] * dphi[j] + g_prior[j];
        }
        grad[p..].copy_from_slice(g_z.as_slice());
        Ok(lp)
    }
}

impl TargetDensity for FullJointTarget<'_> {
    fn dim(&self) -> usize {
        self.spec.dim() + self.n_latent()
    }

    fn log_density_gradient(&self, x: &[f64], grad: &mut [f64]) -> Result<f64> {
        crate::error::check_len("point", x.len(), self.dim())?;
        crate::error::check_len("gradient", grad.len(), self.dim())?;
        match self.evaluate(x, grad) {
            Err(e) if is_rejection(&e) => Ok(f64::NEG_INFINITY),
            other => other,
        }
    }

    fn param_names(&self) -> Vec<String> {
        let mut names = self.spec.param_names();
        names.extend((0..self.n_latent()).map(|i| format!("theta[{i}]")));
        names
    }

    fn constrain(&self, x: &[f64]) -> Vec<f64> {
        let p = self.spec.dim();
        let phi = self.spec.constrain(&x[..p]);
        let mut out: Vec<f64> = phi.iter().copied().collect();
        match self.factor(&phi) {
            Ok(l) => out.extend((&l * DVector::from_column_slice(&x[p..])).iter()),
            Err(_) => out.extend(std::iter::repeat_n(f64::NAN, self.n_latent())),
        }
        out
    }
}

/// Either posterior, behind one [`TargetDensity`].
#[derive(Debug)]
pub enum ModelTarget<'a> {
    Laplace(LaplaceTarget<'a>),
    FullJoint(FullJointTarget<'a>),
}

/// Builds the target of the requested kind for `spec`.
pub fn unconstrained_target(spec: &ModelSpec, kind: TargetKind) -> Result<ModelTarget<'_>> {
    Ok(match kind {
        TargetKind::Laplace => ModelTarget::Laplace(LaplaceTarget::new(spec)?),
        TargetKind::FullJoint => ModelTarget::FullJoint(FullJointTarget::new(spec)?),
    })
}

impl TargetDensity for ModelTarget<'_> {
    fn dim(&self) -> usize {
        match self {
            ModelTarget::Laplace(t) => t.dim(),
            ModelTarget::FullJoint(t) => t.dim(),
        }
    }

    fn log_density_gradient(&self, x: &[f64], grad: &mut [f64]) -> Result<f64> {
        match self {
            ModelTarget::Laplace(t) => t.log_density_gradient(x, grad),
            ModelTarget::FullJoint(t) => t.log_density_gradient(x, grad),
        }
    }

    fn param_names(&self) -> Vec<String> {
        match self {
            ModelTarget::Laplace(t) => t.param_names(),
            ModelTarget::FullJoint(t) => t.param_names(),
        }
    }

    fn constrain(&self, x: &[f64]) -> Vec<f64> {
        match self {
            ModelTarget::Laplace(t) => t.constrain(x),
            ModelTarget::FullJoint(t) => t.constrain(x),
        }
    }
}
