use serde::{Deserialize, Serialize};
use statrs::function::gamma::ln_gamma;

use crate::error::{Error, Result};

/// Univariate prior on one hyperparameter. Densities include their
/// normalizing constants.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "family", rename_all = "kebab-case")]
pub enum Prior {
    /// `x⁻⁽ᵃ⁺¹⁾ exp(−b/x) bᵃ / Γ(a)` on `x > 0`.
    InvGamma { shape: f64, scale: f64 },
    /// Student-t with location 0 restricted to `x ≥ 0`. The normalizing
    /// constant is that of the untruncated density, which only shifts the
    /// log density by `log 2`.
    PositiveStudentT { df: f64, scale: f64 },
    Normal { mean: f64, sd: f64 },
}

impl Prior {
    pub fn validate(&self) -> Result<()> {
        let ok = match *self {
            Prior::InvGamma { shape, scale } => shape > 0.0 && scale > 0.0,
            Prior::PositiveStudentT { df, scale } => df > 0.0 && scale > 0.0,
            Prior::Normal { mean, sd } => mean.is_finite() && sd > 0.0,
        };
        if !ok {
            return Err(Error::domain(format!("invalid prior parameters {self:?}")));
        }
        Ok(())
    }

    /// Log density at `x`; `−∞` outside the support.
    pub fn log_density(&self, x: f64) -> f64 {
        match *self {
            Prior::InvGamma { shape, scale } => {
                if !(x > 0.0) {
                    return f64::NEG_INFINITY;
                }
                shape * scale.ln() - ln_gamma(shape) - (shape + 1.0) * x.ln() - scale / x
            }
            Prior::PositiveStudentT { df, scale } => {
                if !(x >= 0.0) {
                    return f64::NEG_INFINITY;
                }
                let z = x / scale;
                ln_gamma(0.5 * (df + 1.0))
                    - ln_gamma(0.5 * df)
                    - 0.5 * (df * std::f64::consts::PI).ln()
                    - scale.ln()
                    - 0.5 * (df + 1.0) * (z * z / df).ln_1p()
            }
            Prior::Normal { mean, sd } => {
                let z = (x - mean) / sd;
                -0.5 * z * z - sd.ln() - 0.5 * (2.0 * std::f64::consts::PI).ln()
            }
        }
    }

    /// `d/dx log p(x)`.
    pub fn grad(&self, x: f64) -> f64 {
        match *self {
            Prior::InvGamma { shape, scale } => -(shape + 1.0) / x + scale / (x * x),
            Prior::PositiveStudentT { df, scale } => -(df + 1.0) * x / (df * scale * scale + x * x),
            Prior::Normal { mean, sd } => -(x - mean) / (sd * sd),
        }
    }

    /// The natural unconstraining transform for the prior's support.
    pub fn default_transform(&self) -> Transform {
        match self {
            Prior::Normal { .. } => Transform::Identity,
            _ => Transform::Log,
        }
    }
}

/// Map between a constrained value `x` and an unconstrained `u`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Transform {
    /// `x = exp(u)` for positive parameters.
    Log,
    Identity,
}

impl Transform {
    /// `x ↦ u`.
    pub fn unconstrain(&self, x: f64) -> f64 {
        match self {
            Transform::Log => x.ln(),
            Transform::Identity => x,
        }
    }

    /// `u ↦ x`.
    pub fn constrain(&self, u: f64) -> f64 {
        match self {
            Transform::Log => u.exp(),
            Transform::Identity => u,
        }
    }

    /// `dx/du`.
    pub fn derivative(&self, u: f64) -> f64 {
        match self {
            Transform::Log => u.exp(),
            Transform::Identity => 1.0,
        }
    }

    /// `log |dx/du|`.
    pub fn log_jacobian(&self, u: f64) -> f64 {
        match self {
            Transform::Log => u,
            Transform::Identity => 0.0,
        }
    }

    /// `d/du log |dx/du|`.
    pub fn log_jacobian_grad(&self, _u: f64) -> f64 {
        match self {
            Transform::Log => 1.0,
            Transform::Identity => 0.0,
        }
    }
}
