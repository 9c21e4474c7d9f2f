//! Observation models `π(y | θ)` with diagonal derivative stacks.
//!
//! Every supported likelihood factorizes over the latent coordinates, so the
//! Hessian in `θ` is diagonal and each derivative is returned as a vector.
//! The data are held as per-latent sufficient statistics: `sums` (total
//! outcome attached to latent `i`) and `counts` (number of observations
//! attached to latent `i`).
//!
//! | kind            | distribution of `sums[i]`                         |
//! |-----------------|---------------------------------------------------|
//! | poisson-log     | `Poisson(counts[i] * exposure[i] * exp(θ[i]))`    |
//! | bernoulli-logit | `Binomial(counts[i], logistic(θ[i]))`             |
//! | gaussian-test   | `sums[i] / counts[i] ~ N(θ[i], σ² / counts[i])`   |
//!
//! A latent with `counts[i] == 0` carries no information.

use nalgebra::DVector;
use serde::{Deserialize, Serialize};
use statrs::function::gamma::ln_gamma;

use crate::error::{check_len, Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum LikelihoodKind {
    PoissonLog,
    BernoulliLogit,
    GaussianTest,
}

#[derive(Debug, Clone)]
pub struct LikelihoodModel {
    kind: LikelihoodKind,
    sums: DVector<f64>,
    counts: DVector<f64>,
    exposure: Option<DVector<f64>>,
    noise_sd: Option<f64>,
}

fn validate_counts(counts: &[u32], sums: &[f64]) -> Result<()> {
    check_len("counts", counts.len(), sums.len())?;
    if sums.iter().any(|s| !s.is_finite()) {
        return Err(Error::domain("sums must be finite"));
    }
    Ok(())
}

fn to_vec(xs: &[u32]) -> DVector<f64> {
    DVector::from_iterator(xs.len(), xs.iter().map(|&c| c as f64))
}

#[inline]
fn logistic(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

/// `log(1 + exp(x))` without overflow.
#[inline]
fn softplus(x: f64) -> f64 {
    if x > 0.0 {
        x + (-x).exp().ln_1p()
    } else {
        x.exp().ln_1p()
    }
}

fn ln_factorial(k: f64) -> f64 {
    ln_gamma(k + 1.0)
}

impl LikelihoodModel {
    /// Poisson counts with log link. `exposure` defaults to one per latent.
    pub fn poisson_log(sums: &[f64], counts: &[u32], exposure: Option<&[f64]>) -> Result<Self> {
        validate_counts(counts, sums)?;
        for (i, (&s, &c)) in sums.iter().zip(counts).enumerate() {
            if s < 0.0 || s.fract() != 0.0 {
                return Err(Error::domain(format!(
                    "poisson sums must be nonnegative integers (entry {i} is {s})"
                )));
            }
            if c == 0 && s > 0.0 {
                return Err(Error::domain(format!(
                    "entry {i} has a positive sum but zero observations"
                )));
            }
        }
        let exposure = match exposure {
            Some(e) => {
                check_len("exposure", e.len(), sums.len())?;
                if e.iter().any(|&v| !(v > 0.0) || !v.is_finite()) {
                    return Err(Error::domain("exposure entries must be strictly positive"));
                }
                Some(DVector::from_column_slice(e))
            }
            None => None,
        };
        Ok(Self {
            kind: LikelihoodKind::PoissonLog,
            sums: DVector::from_column_slice(sums),
            counts: to_vec(counts),
            exposure,
            noise_sd: None,
        })
    }

    /// Binomial successes out of `counts` trials with logit link.
    pub fn bernoulli_logit(sums: &[f64], counts: &[u32]) -> Result<Self> {
        validate_counts(counts, sums)?;
        for (i, (&s, &c)) in sums.iter().zip(counts).enumerate() {
            if s < 0.0 || s.fract() != 0.0 || s > c as f64 {
                return Err(Error::domain(format!(
                    "bernoulli sums must be integers in [0, counts] (entry {i} is {s} of {c})"
                )));
            }
        }
        Ok(Self {
            kind: LikelihoodKind::BernoulliLogit,
            sums: DVector::from_column_slice(sums),
            counts: to_vec(counts),
            exposure: None,
            noise_sd: None,
        })
    }

    /// Gaussian observations with known noise. The Laplace approximation is
    /// exact for this model, which makes it the reference fixture for the
    /// whole pipeline.
    pub fn gaussian_test(sums: &[f64], counts: &[u32], noise_sd: f64) -> Result<Self> {
        validate_counts(counts, sums)?;
        if !(noise_sd > 0.0) || !noise_sd.is_finite() {
            return Err(Error::domain(format!(
                "noise sd must be strictly positive, got {noise_sd}"
            )));
        }
        Ok(Self {
            kind: LikelihoodKind::GaussianTest,
            sums: DVector::from_column_slice(sums),
            counts: to_vec(counts),
            exposure: None,
            noise_sd: Some(noise_sd),
        })
    }

    pub fn kind(&self) -> LikelihoodKind {
        self.kind
    }

    pub fn dim(&self) -> usize {
        self.sums.len()
    }

    pub fn sums(&self) -> &DVector<f64> {
        &self.sums
    }

    pub fn counts(&self) -> &DVector<f64> {
        &self.counts
    }

    pub fn exposure(&self) -> Option<&DVector<f64>> {
        self.exposure.as_ref()
    }

    pub fn noise_sd(&self) -> Option<f64> {
        self.noise_sd
    }

    /// Poisson rate multiplier `counts * exposure` for latent `i`.
    #[inline]
    fn rate_scale(&self, i: usize) -> f64 {
        let e = self.exposure.as_ref().map_or(1.0, |e| e[i]);
        self.counts[i] * e
    }

    #[inline]
    fn sigma2(&self) -> f64 {
        let s = self.noise_sd.unwrap_or(1.0);
        s * s
    }

    fn check_theta(&self, theta: &DVector<f64>) -> Result<()> {
        check_len("theta", theta.len(), self.dim())
    }

    /// `Σ_i log π(y_i | θ_i)`, normalizing constants included.
    pub fn log_density(&self, theta: &DVector<f64>) -> Result<f64> {
        self.check_theta(theta)?;
        let mut total = 0.0;
        for i in 0..self.dim() {
            let (y, n, t) = (self.sums[i], self.counts[i], theta[i]);
            total += match self.kind {
                LikelihoodKind::PoissonLog => {
                    let scale = self.rate_scale(i);
                    if scale == 0.0 {
                        0.0
                    } else {
                        y * (scale.ln() + t) - scale * t.exp() - ln_factorial(y)
                    }
                }
                LikelihoodKind::BernoulliLogit => {
                    let ln_binom = ln_factorial(n) - ln_factorial(y) - ln_factorial(n - y);
                    y * t - n * softplus(t) + ln_binom
                }
                LikelihoodKind::GaussianTest => {
                    if n == 0.0 {
                        0.0
                    } else {
                        let var = self.sigma2() / n;
                        let r = y / n - t;
                        -0.5 * (2.0 * std::f64::consts::PI * var).ln() - 0.5 * r * r / var
                    }
                }
            };
        }
        Ok(total)
    }

    /// `∇_θ log π(y | θ)`.
    pub fn grad(&self, theta: &DVector<f64>) -> Result<DVector<f64>> {
        self.check_theta(theta)?;
        Ok(DVector::from_fn(self.dim(), |i, _| {
            let (y, n, t) = (self.sums[i], self.counts[i], theta[i]);
            match self.kind {
                LikelihoodKind::PoissonLog => y - self.rate_scale(i) * t.exp(),
                LikelihoodKind::BernoulliLogit => y - n * logistic(t),
                LikelihoodKind::GaussianTest => (y - n * t) / self.sigma2(),
            }
        }))
    }

    /// Diagonal of `W = −∇_θ∇_θ log π(y | θ)`.
    pub fn neg_hessian_diag(&self, theta: &DVector<f64>) -> Result<DVector<f64>> {
        self.check_theta(theta)?;
        Ok(DVector::from_fn(self.dim(), |i, _| {
            let (n, t) = (self.counts[i], theta[i]);
            match self.kind {
                LikelihoodKind::PoissonLog => self.rate_scale(i) * t.exp(),
                LikelihoodKind::BernoulliLogit => {
                    let p = logistic(t);
                    n * p * (1.0 - p)
                }
                LikelihoodKind::GaussianTest => n / self.sigma2(),
            }
        }))
    }

    /// Diagonal of the third derivative tensor `∇_θ³ log π(y | θ)`.
    pub fn third_deriv_diag(&self, theta: &DVector<f64>) -> Result<DVector<f64>> {
        self.check_theta(theta)?;
        Ok(DVector::from_fn(self.dim(), |i, _| {
            let (n, t) = (self.counts[i], theta[i]);
            match self.kind {
                LikelihoodKind::PoissonLog => -self.rate_scale(i) * t.exp(),
                LikelihoodKind::BernoulliLogit => {
                    let p = logistic(t);
                    -n * p * (1.0 - p) * (1.0 - 2.0 * p)
                }
                LikelihoodKind::GaussianTest => 0.0,
            }
        }))
    }
}
