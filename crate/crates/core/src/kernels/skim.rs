use nalgebra::{DMatrix, DVector};

use super::{
    check_cotangent, check_index, check_phi, check_positive, column_quadratic_forms,
    weighted_gram, Covariance,
};
use crate::error::{Error, Result};

/// Sparse kernel interaction model covariance.
///
/// With `K₁ = X diag(λ̃²) Xᵀ` and `K₂ = (X∘X) diag(λ̃²) (X∘X)ᵀ`,
///
/// ```text
/// K = ½η₂²(K₁ + 1)∘(K₁ + 1) − ½η₂²K₂ + (τ² − η₂²)K₁ + c₀² − ½η₂²
/// ```
///
/// where scalars are added to every entry. The first two terms carry the
/// pairwise interactions, the `K₁` term the main effects.
///
/// Layout: `φ = (τ, c_aux, χ, λ_1, …, λ_p)`, `c = s_slab √c_aux`,
/// `η₂ = τ²χ / c²` and `λ̃² = c²λ² / (c² + τ²λ²)`.
#[derive(Debug, Clone)]
pub struct Skim {
    design: DMatrix<f64>,
    design_sq: DMatrix<f64>,
    slab_scale: f64,
    intercept_sd: f64,
}

pub(super) struct Parts {
    /// `τ²`
    pub t: f64,
    /// `c²`
    pub g: f64,
    pub chi: f64,
    /// `η₂²`
    pub e: f64,
    /// `λ²`
    pub l: DVector<f64>,
    /// `λ̃²`
    pub v: DVector<f64>,
}

impl Skim {
    pub fn new(design: DMatrix<f64>, slab_scale: f64, intercept_sd: f64) -> Result<Self> {
        check_positive("slab scale", slab_scale)?;
        check_positive("intercept sd", intercept_sd)?;
        if design.nrows() == 0 || design.ncols() == 0 {
            return Err(Error::contract("design matrix must be non-empty"));
        }
        let design_sq = design.component_mul(&design);
        Ok(Self {
            design,
            design_sq,
            slab_scale,
            intercept_sd,
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

    fn covariates(&self) -> usize {
        self.design.ncols()
    }

    pub(super) fn parts(&self, phi: &DVector<f64>) -> Result<Parts> {
        check_phi(phi, self.n_params())?;
        check_positive("tau", phi[0])?;
        check_positive("c_aux", phi[1])?;
        check_positive("chi", phi[2])?;
        for i in 0..self.covariates() {
            check_positive("lambda", phi[3 + i])?;
        }
        let t = phi[0] * phi[0];
        let g = self.slab_scale * self.slab_scale * phi[1];
        let chi = phi[2];
        let eta2 = t * chi / g;
        let l = phi.rows(3, self.covariates()).map(|v| v * v);
        let v = l.map(|l| g * l / (g + t * l));
        Ok(Parts {
            t,
            g,
            chi,
            e: eta2 * eta2,
            l,
            v,
        })
    }

    /// Partials of `λ̃²` in `(τ², c², λ²)`, returned entrywise.
    fn scale_partials(p: &Parts) -> (DVector<f64>, DVector<f64>, DVector<f64>) {
        let m = p.l.len();
        let mut dt = DVector::zeros(m);
        let mut dg = DVector::zeros(m);
        let mut dl = DVector::zeros(m);
        for i in 0..m {
            let l = p.l[i];
            let den = p.g + p.t * l;
            let den2 = den * den;
            dt[i] = -p.g * l * l / den2;
            dg[i] = p.t * l * l / den2;
            dl[i] = p.g * p.g / den2;
        }
        (dt, dg, dl)
    }

    /// Partials of `η₂²` in `(τ², c², χ)`.
    fn eta_partials(p: &Parts) -> (f64, f64, f64) {
        let g2 = p.g * p.g;
        (
            2.0 * p.t * p.chi * p.chi / g2,
            -2.0 * p.t * p.t * p.chi * p.chi / (g2 * p.g),
            2.0 * p.t * p.t * p.chi / g2,
        )
    }

    /// Tangent of `K` along `(dt, de, dv)`.
    fn tangent(&self, p: &Parts, k1: &DMatrix<f64>, k2: &DMatrix<f64>, dt: f64, de: f64, dv: &DVector<f64>) -> DMatrix<f64> {
        let dk1 = weighted_gram(&self.design, dv);
        let dk2 = weighted_gram(&self.design_sq, dv);
        let a = k1.map(|k| p.e * k + p.t);
        let interactions = (k1.component_mul(k1) - k2) * (0.5 * de);
        interactions + a.component_mul(&dk1) - dk2 * (0.5 * p.e) + k1 * dt
    }
}

impl Covariance for Skim {
    fn n(&self) -> usize {
        self.design.nrows()
    }

    fn n_params(&self) -> usize {
        3 + self.covariates()
    }

    fn param_names(&self) -> Vec<String> {
        let mut names = vec!["tau".to_string(), "c_aux".to_string(), "chi".to_string()];
        names.extend((0..self.covariates()).map(|i| format!("lambda[{i}]")));
        names
    }

    fn evaluate(&self, phi: &DVector<f64>) -> Result<DMatrix<f64>> {
        let p = self.parts(phi)?;
        let k1 = weighted_gram(&self.design, &p.v);
        let k2 = weighted_gram(&self.design_sq, &p.v);
        let c02 = self.intercept_sd * self.intercept_sd;
        let half_e = 0.5 * p.e;
        Ok(DMatrix::from_fn(k1.nrows(), k1.ncols(), |i, j| {
            let a = k1[(i, j)] + 1.0;
            half_e * a * a - half_e * k2[(i, j)] + (p.t - p.e) * k1[(i, j)] + c02 - half_e
        }))
    }

    fn pullback(&self, phi: &DVector<f64>, w: &DMatrix<f64>) -> Result<DVector<f64>> {
        let p = self.parts(phi)?;
        check_cotangent(w, self.n())?;
        let k1 = weighted_gram(&self.design, &p.v);
        let k2 = weighted_gram(&self.design_sq, &p.v);

        // Adjoints of the intermediate quantities.
        let g_k1 = w.component_mul(&k1.map(|k| p.e * k + p.t));
        let v_bar = column_quadratic_forms(&self.design, &g_k1)
            - column_quadratic_forms(&self.design_sq, w) * (0.5 * p.e);
        let e_bar = 0.5 * w.component_mul(&(k1.component_mul(&k1) - &k2)).sum();
        let t_direct = w.component_mul(&k1).sum();

        let (vt, vg, vl) = Self::scale_partials(&p);
        let (et, eg, echi) = Self::eta_partials(&p);
        let t_bar = t_direct + e_bar * et + v_bar.dot(&vt);
        let g_bar = e_bar * eg + v_bar.dot(&vg);
        let chi_bar = e_bar * echi;

        let s2 = self.slab_scale * self.slab_scale;
        let mut out = DVector::zeros(self.n_params());
        out[0] = t_bar * 2.0 * phi[0];
        out[1] = g_bar * s2;
        out[2] = chi_bar;
        for i in 0..self.covariates() {
            out[3 + i] = v_bar[i] * vl[i] * 2.0 * phi[3 + i];
        }
        Ok(out)
    }

    fn jacobian_slice(&self, phi: &DVector<f64>, j: usize) -> Result<DMatrix<f64>> {
        let p = self.parts(phi)?;
        check_index(j, self.n_params())?;
        let k1 = weighted_gram(&self.design, &p.v);
        let k2 = weighted_gram(&self.design_sq, &p.v);
        let (vt, vg, vl) = Self::scale_partials(&p);
        let (et, eg, echi) = Self::eta_partials(&p);
        let s2 = self.slab_scale * self.slab_scale;
        let m = self.covariates();
        Ok(match j {
            0 => {
                let d = 2.0 * phi[0];
                self.tangent(&p, &k1, &k2, d, et * d, &(vt * d))
            }
            1 => self.tangent(&p, &k1, &k2, 0.0, eg * s2, &(vg * s2)),
            2 => self.tangent(&p, &k1, &k2, 0.0, echi, &DVector::zeros(m)),
            _ => {
                let i = j - 3;
                let dv = vl[i] * 2.0 * phi[j];
                let x = self.design.column(i);
                let xs = self.design_sq.column(i);
                let dk1 = x * x.transpose() * dv;
                let dk2 = xs * xs.transpose() * dv;
                k1.map(|k| p.e * k + p.t).component_mul(&dk1) - dk2 * (0.5 * p.e)
            }
        })
    }
}
