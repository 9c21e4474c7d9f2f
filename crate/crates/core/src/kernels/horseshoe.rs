use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use super::{
    check_cotangent, check_index, check_phi, check_positive, column_quadratic_forms,
    weighted_gram, Covariance,
};
use crate::error::{Error, Result};

/// Regularized local scales `λ̃_i² = c²λ_i² / (c² + τ²λ_i²)`.
pub fn horseshoe_local_scales(tau: f64, c: f64, lambda: &[f64]) -> Result<DVector<f64>> {
    check_positive("tau", tau)?;
    check_positive("c", c)?;
    if lambda.iter().any(|&l| !(l >= 0.0) || !l.is_finite()) {
        return Err(Error::domain("local scales must be nonnegative"));
    }
    let c2 = c * c;
    let t2 = tau * tau;
    Ok(DVector::from_iterator(
        lambda.len(),
        lambda.iter().map(|&l| {
            let l2 = l * l;
            c2 * l2 / (c2 + t2 * l2)
        }),
    ))
}

/// How the intercept variance `c₀²` enters the linear-model covariance.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Intercept {
    /// `c₀² I`: an independent offset per observation.
    Identity,
    /// `c₀² 11ᵀ`: one intercept shared by every observation.
    Shared,
}

/// Marginal covariance of a linear predictor under the regularized
/// horseshoe prior: `K = c₀² J + X diag(τ² λ̃²) Xᵀ` where `J` is `I` or
/// `11ᵀ` depending on [`Intercept`].
///
/// Hyperparameters are laid out as `φ = (τ, c_aux, λ_1, …, λ_p)` with slab
/// `c = s_slab √c_aux`.
#[derive(Debug, Clone)]
pub struct HorseshoeLinear {
    design: DMatrix<f64>,
    slab_scale: f64,
    intercept_sd: f64,
    intercept: Intercept,
}

/// Quantities shared by evaluate, pullback and slices.
struct Parts {
    /// `τ²`
    t: f64,
    /// `c²`
    g: f64,
    /// `λ²`
    l: DVector<f64>,
}

impl HorseshoeLinear {
    pub fn new(
        design: DMatrix<f64>,
        slab_scale: f64,
        intercept_sd: f64,
        intercept: Intercept,
    ) -> Result<Self> {
        check_positive("slab scale", slab_scale)?;
        check_positive("intercept sd", intercept_sd)?;
        if design.nrows() == 0 || design.ncols() == 0 {
            return Err(Error::contract("design matrix must be non-empty"));
        }
        Ok(Self {
            design,
            slab_scale,
            intercept_sd,
            intercept,
        })
    }

    pub fn design(&self) -> &DMatrix<f64> {
        &self.design
    }

    pub fn slab_scale(&self) -> f64 {
        self.slab_scale
    }

    pub fn intercept_sd(&self) -> f64 {
        self.intercept_sd
    }

    pub fn intercept(&self) -> Intercept {
        self.intercept
    }

    fn covariates(&self) -> usize {
        self.design.ncols()
    }

    fn parts(&self, phi: &DVector<f64>) -> Result<Parts> {
        check_phi(phi, self.n_params())?;
        check_positive("tau", phi[0])?;
        check_positive("c_aux", phi[1])?;
        for i in 0..self.covariates() {
            check_positive("lambda", phi[2 + i])?;
        }
        Ok(Parts {
            t: phi[0] * phi[0],
            g: self.slab_scale * self.slab_scale * phi[1],
            l: phi.rows(2, self.covariates()).map(|v| v * v),
        })
    }

    /// Prior variances `τ² λ̃²` of the slopes.
    fn slope_variances(p: &Parts) -> DVector<f64> {
        p.l.map(|l| p.t * p.g * l / (p.g + p.t * l))
    }

    fn intercept_block(&self) -> DMatrix<f64> {
        let n = self.design.nrows();
        let c02 = self.intercept_sd * self.intercept_sd;
        match self.intercept {
            Intercept::Identity => DMatrix::identity(n, n) * c02,
            Intercept::Shared => DMatrix::from_element(n, n, c02),
        }
    }

    /// Derivatives of `v = τ²c²λ²/(c² + τ²λ²)` with respect to `(τ, c_aux, λ_i)`.
    fn variance_partials(&self, p: &Parts, phi: &DVector<f64>) -> (DVector<f64>, DVector<f64>, DVector<f64>) {
        let tau = phi[0];
        let s2 = self.slab_scale * self.slab_scale;
        let m = self.covariates();
        let mut d_tau = DVector::zeros(m);
        let mut d_caux = DVector::zeros(m);
        let mut d_lambda = DVector::zeros(m);
        for i in 0..m {
            let l = p.l[i];
            let den = p.g + p.t * l;
            let den2 = den * den;
            d_tau[i] = p.g * p.g * l / den2 * 2.0 * tau;
            d_caux[i] = p.t * p.t * l * l / den2 * s2;
            d_lambda[i] = p.t * p.g * p.g / den2 * 2.0 * phi[2 + i];
        }
        (d_tau, d_caux, d_lambda)
    }
}

impl Covariance for HorseshoeLinear {
    fn n(&self) -> usize {
        self.design.nrows()
    }

    fn n_params(&self) -> usize {
        2 + self.covariates()
    }

    fn param_names(&self) -> Vec<String> {
        let mut names = vec!["tau".to_string(), "c_aux".to_string()];
        names.extend((0..self.covariates()).map(|i| format!("lambda[{i}]")));
        names
    }

    fn evaluate(&self, phi: &DVector<f64>) -> Result<DMatrix<f64>> {
        let p = self.parts(phi)?;
        let v = Self::slope_variances(&p);
        Ok(weighted_gram(&self.design, &v) + self.intercept_block())
    }

    fn pullback(&self, phi: &DVector<f64>, w: &DMatrix<f64>) -> Result<DVector<f64>> {
        let p = self.parts(phi)?;
        check_cotangent(w, self.n())?;
        let v_bar = column_quadratic_forms(&self.design, w);
        let (d_tau, d_caux, d_lambda) = self.variance_partials(&p, phi);
        let mut out = DVector::zeros(self.n_params());
        out[0] = v_bar.dot(&d_tau);
        out[1] = v_bar.dot(&d_caux);
        for i in 0..self.covariates() {
            out[2 + i] = v_bar[i] * d_lambda[i];
        }
        Ok(out)
    }

    fn jacobian_slice(&self, phi: &DVector<f64>, j: usize) -> Result<DMatrix<f64>> {
        let p = self.parts(phi)?;
        check_index(j, self.n_params())?;
        let (d_tau, d_caux, d_lambda) = self.variance_partials(&p, phi);
        Ok(match j {
            0 => weighted_gram(&self.design, &d_tau),
            1 => weighted_gram(&self.design, &d_caux),
            _ => {
                let i = j - 2;
                let x = self.design.column(i);
                x * x.transpose() * d_lambda[i]
            }
        })
    }
}
