use nalgebra::{DMatrix, DVector};

use super::{check_cotangent, check_index, check_phi, check_positive, Covariance};
use crate::error::{Error, Result};

/// Exponentiated quadratic kernel `α² exp(−‖x_i − x_j‖² / ρ²)` with
/// `φ = (α, ρ)`. Note the denominator is `ρ²`, not `2ρ²`.
#[derive(Debug, Clone)]
pub struct SquaredExp {
    sq_dist: DMatrix<f64>,
}

impl SquaredExp {
    /// `points` holds one input location per row.
    pub fn new(points: &DMatrix<f64>) -> Result<Self> {
        if points.nrows() == 0 {
            return Err(Error::contract("squared-exp kernel needs at least one point"));
        }
        let n = points.nrows();
        let sq_dist = DMatrix::from_fn(n, n, |i, j| {
            (points.row(i) - points.row(j)).norm_squared()
        });
        Ok(Self { sq_dist })
    }

    pub fn squared_distances(&self) -> &DMatrix<f64> {
        &self.sq_dist
    }

    fn unpack(&self, phi: &DVector<f64>) -> Result<(f64, f64)> {
        check_phi(phi, 2)?;
        check_positive("alpha", phi[0])?;
        check_positive("rho", phi[1])?;
        Ok((phi[0], phi[1]))
    }
}

impl Covariance for SquaredExp {
    fn n(&self) -> usize {
        self.sq_dist.nrows()
    }

    fn n_params(&self) -> usize {
        2
    }

    fn param_names(&self) -> Vec<String> {
        vec!["alpha".into(), "rho".into()]
    }

    fn evaluate(&self, phi: &DVector<f64>) -> Result<DMatrix<f64>> {
        let (alpha, rho) = self.unpack(phi)?;
        let a2 = alpha * alpha;
        let inv_r2 = 1.0 / (rho * rho);
        Ok(self.sq_dist.map(|d| a2 * (-d * inv_r2).exp()))
    }

    fn pullback(&self, phi: &DVector<f64>, w: &DMatrix<f64>) -> Result<DVector<f64>> {
        let (alpha, rho) = self.unpack(phi)?;
        check_cotangent(w, self.n())?;
        let k = self.evaluate(phi)?;
        let wk = w.component_mul(&k);
        let d_alpha = 2.0 / alpha * wk.sum();
        let d_rho = 2.0 / (rho * rho * rho) * wk.component_mul(&self.sq_dist).sum();
        Ok(DVector::from_vec(vec![d_alpha, d_rho]))
    }

    fn jacobian_slice(&self, phi: &DVector<f64>, j: usize) -> Result<DMatrix<f64>> {
        let (alpha, rho) = self.unpack(phi)?;
        check_index(j, 2)?;
        let k = self.evaluate(phi)?;
        Ok(match j {
            0 => k * (2.0 / alpha),
            _ => k.component_mul(&self.sq_dist) * (2.0 / (rho * rho * rho)),
        })
    }
}
