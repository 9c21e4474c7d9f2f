//! Covariance models `φ ↦ K(φ)` and their derivatives.
//!
//! Every covariance exposes three views of `∂K/∂φ`:
//!
//! * [`Covariance::pullback`] contracts a cotangent matrix `W` with the full
//!   Jacobian, returning `Σ_ij W_ij ∂K_ij/∂φ_k` for every `k` in one pass.
//! * [`Covariance::jacobian_slice`] materializes a single `∂K/∂φ_j`.
//! * [`Covariance::evaluate`] is the plain map.
//!
//! The built-in kernels implement all three analytically. [`TapeKernel`]
//! records arbitrary scalar code once and derives the pullback with a reverse
//! sweep and each Jacobian slice with a forward sweep, so user-composed
//! kernels need no hand-written derivatives.

mod horseshoe;
mod skim;
mod squared_exp;
mod tape;

use std::cell::Cell;

use nalgebra::{DMatrix, DVector};

pub use horseshoe::{horseshoe_local_scales, HorseshoeLinear, Intercept};
pub use skim::Skim;
pub use squared_exp::SquaredExp;
pub use tape::{packed_index, Tape, TapeBuilder, TapeKernel, Var};

use crate::error::{check_len, Error, Result};

/// A differentiable covariance function over a fixed set of inputs.
pub trait Covariance: Send + Sync {
    /// Number of latent coordinates (rows of `K`).
    fn n(&self) -> usize;

    /// Number of hyperparameters (length of `φ`).
    fn n_params(&self) -> usize;

    fn param_names(&self) -> Vec<String>;

    fn evaluate(&self, phi: &DVector<f64>) -> Result<DMatrix<f64>>;

    /// `k ↦ Σ_ij W_ij ∂K_ij/∂φ_k`.
    fn pullback(&self, phi: &DVector<f64>, w: &DMatrix<f64>) -> Result<DVector<f64>>;

    /// `∂K/∂φ_j`.
    fn jacobian_slice(&self, phi: &DVector<f64>, j: usize) -> Result<DMatrix<f64>>;
}

/// The covariance families shipped with the crate.
#[derive(Debug, Clone)]
pub enum CovarianceModel {
    SquaredExp(SquaredExp),
    HorseshoeLinear(HorseshoeLinear),
    Skim(Skim),
    Tape(TapeKernel),
}

impl CovarianceModel {
    fn inner(&self) -> &dyn Covariance {
        match self {
            CovarianceModel::SquaredExp(k) => k,
            CovarianceModel::HorseshoeLinear(k) => k,
            CovarianceModel::Skim(k) => k,
            CovarianceModel::Tape(k) => k,
        }
    }
}

impl Covariance for CovarianceModel {
    fn n(&self) -> usize {
        self.inner().n()
    }
    fn n_params(&self) -> usize {
        self.inner().n_params()
    }
    fn param_names(&self) -> Vec<String> {
        self.inner().param_names()
    }
    fn evaluate(&self, phi: &DVector<f64>) -> Result<DMatrix<f64>> {
        self.inner().evaluate(phi)
    }
    fn pullback(&self, phi: &DVector<f64>, w: &DMatrix<f64>) -> Result<DVector<f64>> {
        self.inner().pullback(phi, w)
    }
    fn jacobian_slice(&self, phi: &DVector<f64>, j: usize) -> Result<DMatrix<f64>> {
        self.inner().jacobian_slice(phi, j)
    }
}

/// Wraps a covariance and counts derivative sweeps. Counters live on the
/// wrapper, so each gradient call owns its own tally.
pub struct SweepCounter<'a, C: Covariance + ?Sized> {
    inner: &'a C,
    pullbacks: Cell<usize>,
    slices: Cell<usize>,
}

impl<'a, C: Covariance + ?Sized> SweepCounter<'a, C> {
    pub fn new(inner: &'a C) -> Self {
        Self {
            inner,
            pullbacks: Cell::new(0),
            slices: Cell::new(0),
        }
    }

    pub fn pullbacks(&self) -> usize {
        self.pullbacks.get()
    }

    pub fn slices(&self) -> usize {
        self.slices.get()
    }

    pub fn pullback(&self, phi: &DVector<f64>, w: &DMatrix<f64>) -> Result<DVector<f64>> {
        self.pullbacks.set(self.pullbacks.get() + 1);
        self.inner.pullback(phi, w)
    }

    pub fn jacobian_slice(&self, phi: &DVector<f64>, j: usize) -> Result<DMatrix<f64>> {
        self.slices.set(self.slices.get() + 1);
        self.inner.jacobian_slice(phi, j)
    }
}

pub(crate) fn check_phi(phi: &DVector<f64>, n_params: usize) -> Result<()> {
    check_len("phi", phi.len(), n_params)?;
    if phi.iter().any(|v| !v.is_finite()) {
        return Err(Error::domain("phi must be finite"));
    }
    Ok(())
}

pub(crate) fn check_positive(name: &str, value: f64) -> Result<()> {
    if !(value > 0.0) || !value.is_finite() {
        return Err(Error::domain(format!(
            "{name} must be strictly positive, got {value}"
        )));
    }
    Ok(())
}

pub(crate) fn check_cotangent(w: &DMatrix<f64>, n: usize) -> Result<()> {
    if w.nrows() != n || w.ncols() != n {
        return Err(Error::contract(format!(
            "cotangent is {}x{}, expected {n}x{n}",
            w.nrows(),
            w.ncols()
        )));
    }
    Ok(())
}

pub(crate) fn check_index(j: usize, n_params: usize) -> Result<()> {
    if j >= n_params {
        return Err(Error::contract(format!(
            "hyperparameter index {j} out of range for {n_params} parameters"
        )));
    }
    Ok(())
}

/// `v_i ↦ x_iᵀ G x_i` for every column `x_i` of `x`.
pub(crate) fn column_quadratic_forms(x: &DMatrix<f64>, g: &DMatrix<f64>) -> DVector<f64> {
    let gx = g * x;
    DVector::from_fn(x.ncols(), |i, _| x.column(i).dot(&gx.column(i)))
}

/// `X diag(d) Xᵀ`.
pub(crate) fn weighted_gram(x: &DMatrix<f64>, d: &DVector<f64>) -> DMatrix<f64> {
    let mut xd = x.clone();
    for (i, mut col) in xd.column_iter_mut().enumerate() {
        col *= d[i];
    }
    &xd * x.transpose()
}
