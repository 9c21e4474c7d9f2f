//! Complete posteriors over hyperparameters.
//!
//! A [`ModelSpec`] bundles a likelihood, a covariance model, one prior and
//! one unconstraining transform per hyperparameter, and the Newton settings.
//! From it, [`unconstrained_target`] builds either the embedded Laplace
//! target over `φ` alone or the full joint over `(φ, z)` with `θ = chol(K) z`.

mod priors;
mod targets;

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use serde::{Deserialize, Serialize};

pub use priors::{Prior, Transform};
pub use targets::{unconstrained_target, FullJointTarget, LaplaceTarget, ModelTarget, TargetKind};

use crate::diagnostics::quantile;
use crate::error::{Error, Result};
use crate::kernels::{Covariance, CovarianceModel, HorseshoeLinear, Intercept, Skim, SquaredExp};
use crate::laplace::{newton_solve, sample_conditional, LaplaceConfig};
use crate::likelihoods::LikelihoodModel;

/// Prior and transform of one hyperparameter.
#[derive(Debug, Clone, PartialEq)]
pub struct ParamSpec {
    pub name: String,
    pub prior: Prior,
    pub transform: Transform,
}

impl ParamSpec {
    pub fn new(name: impl Into<String>, prior: Prior) -> Self {
        Self {
            name: name.into(),
            transform: prior.default_transform(),
            prior,
        }
    }
}

/// Inverse-gamma hyperpriors of the squared-exponential kernel.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GpPriors {
    pub alpha_shape: f64,
    pub alpha_scale: f64,
    pub rho_shape: f64,
    pub rho_scale: f64,
}

impl Default for GpPriors {
    fn default() -> Self {
        Self {
            alpha_shape: 2.0,
            alpha_scale: 2.0,
            rho_shape: 2.0,
            rho_scale: 2.0,
        }
    }
}

/// Constants of the regularized horseshoe prior.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct HorseshoeConstants {
    /// Prior guess at the number of relevant covariates.
    pub p0: f64,
    pub nu_local: f64,
    pub nu_global: f64,
    pub slab_scale: f64,
    pub slab_df: f64,
    pub intercept_sd: f64,
}

impl Default for HorseshoeConstants {
    fn default() -> Self {
        Self {
            p0: 5.0,
            nu_local: 1.0,
            nu_global: 1.0,
            slab_scale: 2.0,
            slab_df: 100.0,
            intercept_sd: 5.0,
        }
    }
}

impl HorseshoeConstants {
    /// Scale of the global shrinkage prior, `p₀ / (√n (p − p₀))`.
    pub fn global_scale(&self, n: usize, p: usize) -> Result<f64> {
        let p = p as f64;
        if !(self.p0 > 0.0 && self.p0 < p) {
            return Err(Error::domain(format!("p0 = {} must lie in (0, p = {p})", self.p0)));
        }
        Ok(self.p0 / ((n as f64).sqrt() * (p - self.p0)))
    }

    fn validate(&self) -> Result<()> {
        for (name, v) in [
            ("nu_local", self.nu_local),
            ("nu_global", self.nu_global),
            ("slab_scale", self.slab_scale),
            ("slab_df", self.slab_df),
            ("intercept_sd", self.intercept_sd),
        ] {
            if !(v > 0.0 && v.is_finite()) {
                return Err(Error::domain(format!("horseshoe constant {name} must be positive")));
            }
        }
        Ok(())
    }

    /// Priors of `(τ, c_aux)` followed by, when `chi` is set, `χ`.
    fn shared_priors(&self, n: usize, p: usize, chi: bool) -> Result<Vec<ParamSpec>> {
        self.validate()?;
        let half_df = 0.5 * self.slab_df;
        let mut v = vec![
            ParamSpec::new(
                "tau",
                Prior::PositiveStudentT {
                    df: self.nu_global,
                    scale: self.global_scale(n, p)?,
                },
            ),
            ParamSpec::new("c_aux", Prior::InvGamma { shape: half_df, scale: half_df }),
        ];
        if chi {
            v.push(ParamSpec::new("chi", Prior::InvGamma { shape: half_df, scale: half_df }));
        }
        Ok(v)
    }

    fn local_priors(&self, p: usize) -> impl Iterator<Item = ParamSpec> + '_ {
        (0..p).map(move |i| {
            ParamSpec::new(
                format!("lambda[{i}]"),
                Prior::PositiveStudentT {
                    df: self.nu_local,
                    scale: 1.0,
                },
            )
        })
    }
}

/// Everything needed to evaluate the posterior over hyperparameters.
#[derive(Debug, Clone)]
pub struct ModelSpec {
    pub likelihood: LikelihoodModel,
    pub covariance: CovarianceModel,
    pub params: Vec<ParamSpec>,
    pub laplace: LaplaceConfig,
}

impl ModelSpec {
    pub fn new(
        likelihood: LikelihoodModel,
        covariance: CovarianceModel,
        params: Vec<ParamSpec>,
        laplace: LaplaceConfig,
    ) -> Result<Self> {
        let spec = Self {
            likelihood,
            covariance,
            params,
            laplace,
        };
        spec.validate()?;
        Ok(spec)
    }

    pub fn validate(&self) -> Result<()> {
        if self.params.len() != self.covariance.n_params() {
            return Err(Error::contract(format!(
                "{} parameter specs for a covariance with {} hyperparameters",
                self.params.len(),
                self.covariance.n_params()
            )));
        }
        if self.likelihood.dim() != self.covariance.n() {
            return Err(Error::contract(format!(
                "likelihood has {} coordinates but the covariance has {}",
                self.likelihood.dim(),
                self.covariance.n()
            )));
        }
        for p in &self.params {
            p.prior.validate()?;
            if p.transform == Transform::Identity && !matches!(p.prior, Prior::Normal { .. }) {
                return Err(Error::contract(format!(
                    "parameter `{}` has positive support and needs the log transform",
                    p.name
                )));
            }
        }
        self.laplace.validate()
    }

    /// Squared-exponential latent field with inverse-gamma priors on `(α, ρ)`.
    pub fn squared_exp(
        likelihood: LikelihoodModel,
        points: &DMatrix<f64>,
        priors: GpPriors,
        laplace: LaplaceConfig,
    ) -> Result<Self> {
        let params = vec![
            ParamSpec::new(
                "alpha",
                Prior::InvGamma {
                    shape: priors.alpha_shape,
                    scale: priors.alpha_scale,
                },
            ),
            ParamSpec::new(
                "rho",
                Prior::InvGamma {
                    shape: priors.rho_shape,
                    scale: priors.rho_scale,
                },
            ),
        ];
        let cov = CovarianceModel::SquaredExp(SquaredExp::new(points)?);
        Self::new(likelihood, cov, params, laplace)
    }

    /// Linear predictor under the regularized horseshoe prior.
    pub fn sparse_glm(
        likelihood: LikelihoodModel,
        design: DMatrix<f64>,
        constants: HorseshoeConstants,
        intercept: Intercept,
        laplace: LaplaceConfig,
    ) -> Result<Self> {
        let (n, p) = design.shape();
        let mut params = constants.shared_priors(n, p, false)?;
        params.extend(constants.local_priors(p));
        let cov = HorseshoeLinear::new(design, constants.slab_scale, constants.intercept_sd, intercept)?;
        Self::new(likelihood, CovarianceModel::HorseshoeLinear(cov), params, laplace)
    }

    /// Sparse kernel interaction model with horseshoe-type priors.
    pub fn skim(
        likelihood: LikelihoodModel,
        design: DMatrix<f64>,
        constants: HorseshoeConstants,
        laplace: LaplaceConfig,
    ) -> Result<Self> {
        let (n, p) = design.shape();
        let mut params = constants.shared_priors(n, p, true)?;
        params.extend(constants.local_priors(p));
        let cov = Skim::new(design, constants.slab_scale, constants.intercept_sd)?;
        Self::new(likelihood, CovarianceModel::Skim(cov), params, laplace)
    }

    pub fn dim(&self) -> usize {
        self.params.len()
    }

    pub fn param_names(&self) -> Vec<String> {
        self.params.iter().map(|p| p.name.clone()).collect()
    }

    /// `u ↦ φ`.
    pub fn constrain(&self, u: &[f64]) -> DVector<f64> {
        DVector::from_iterator(u.len(), self.params.iter().zip(u).map(|(p, &v)| p.transform.constrain(v)))
    }

    /// `φ ↦ u`.
    pub fn unconstrain(&self, phi: &[f64]) -> Vec<f64> {
        self.params.iter().zip(phi).map(|(p, &v)| p.transform.unconstrain(v)).collect()
    }

    /// `Σ log p_j(φ_j)`.
    pub fn prior_log_density(&self, phi: &[f64]) -> Result<f64> {
        crate::error::check_len("phi", phi.len(), self.dim())?;
        Ok(self.params.iter().zip(phi).map(|(p, &x)| p.prior.log_density(x)).sum())
    }
}

/// One draw from the Gaussian approximation of `π(θ | y, φ)` per row of
/// `phi_draws` (constrained values, columns in parameter order).
pub fn recover_latents<R: Rng + ?Sized>(
    spec: &ModelSpec,
    phi_draws: &DMatrix<f64>,
    rng: &mut R,
) -> Result<DMatrix<f64>> {
    crate::error::check_len("phi draw", phi_draws.ncols(), spec.dim())?;
    let n = spec.covariance.n();
    let mut out = DMatrix::zeros(phi_draws.nrows(), n);
    for r in 0..phi_draws.nrows() {
        let phi = phi_draws.row(r).transpose();
        let state = newton_solve(&spec.likelihood, &spec.covariance, &phi, &spec.laplace)?;
        let theta = sample_conditional(&state, rng)?;
        out.row_mut(r).copy_from(&theta.transpose());
    }
    Ok(out)
}

/// Empirical `q`-quantile of every column.
pub fn quantile_summary(draws: &DMatrix<f64>, q: f64) -> Result<DVector<f64>> {
    let cols: Result<Vec<f64>> = (0..draws.ncols())
        .map(|j| quantile(draws.column(j).as_slice(), q))
        .collect();
    Ok(DVector::from_vec(cols?))
}
