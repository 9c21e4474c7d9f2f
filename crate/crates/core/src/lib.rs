//! Embedded Laplace approximation for latent Gaussian models.
//!
//! A latent Gaussian model has hyperparameters `φ`, a latent field
//! `θ ~ N(0, K(φ))` and observations `y` that depend on `θ` one coordinate at
//! a time. This crate integrates `θ` out with a Laplace approximation,
//! differentiates the approximate log marginal `log π_G(y | φ)` with an
//! adjoint method that needs a single reverse pass through `K(φ)`, and
//! samples `φ` with dynamic Hamiltonian Monte Carlo.
//!
//! The pieces, bottom up:
//!
//! * [`likelihoods`]: observation models and their derivative stacks.
//! * [`kernels`]: covariance functions with analytic pullbacks, plus a scalar
//!   tape for user-defined kernels.
//! * [`laplace`]: Newton mode finding, the approximate marginal, its two
//!   gradient routes and conditional draws of `θ`.
//! * [`sampler`]: multinomial no-U-turn HMC with warmup adaptation.
//! * [`models`]: priors, transforms and complete posterior targets.
//! * [`harness`]: simulators, experiment drivers, file formats and the
//!   differentiation benchmark.

// `!(x > 0.0)` is used on purpose: it also rejects NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod diagnostics;
pub mod draws;
pub mod error;
pub mod harness;
pub mod kernels;
pub mod laplace;
pub mod likelihoods;
pub mod models;
pub mod sampler;

pub use error::{Error, Result};
