//! Synthetic data sets with known ground truth.

use nalgebra::{DMatrix, DVector};
use rand::seq::index::sample;
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand::SeedableRng;
use rand_distr::{Distribution, Poisson, StandardNormal};
use serde::{Deserialize, Serialize};

use super::data::{DiseaseMapData, GlmData};
use crate::error::{Error, Result};
use crate::kernels::{Covariance, SquaredExp};

/// Magnitude of every planted slope.
pub const PLANTED_EFFECT: f64 = 3.0;

/// Range of the simulated expected counts `y_e`.
const EXPOSURE_RANGE: (f64, f64) = (1.0, 10.0);

/// A disease-map data set and the latent field that generated it.
#[derive(Debug, Clone)]
pub struct SimulatedDiseaseMap {
    pub data: DiseaseMapData,
    pub theta: DVector<f64>,
}

/// Ground truth of a simulated regression data set.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RegressionTruth {
    pub intercept: f64,
    /// Column indices (0-based) with a nonzero main effect.
    pub true_indices: Vec<usize>,
    pub beta: Vec<f64>,
    /// Pairwise effects `(i, j, β_ij)`; empty for the plain GLM.
    pub interactions: Vec<(usize, usize, f64)>,
}

#[derive(Debug, Clone)]
pub struct SimulatedRegression {
    pub data: GlmData,
    pub truth: RegressionTruth,
}

/// `n` uniform points on the unit square, exposures uniform on `[1, 10)`,
/// `θ ~ N(0, K(α, ρ))` and `y_i ~ Poisson(y_e^i exp(θ_i))`.
pub fn simulate_disease_map(n: usize, alpha: f64, rho: f64, seed: u64) -> Result<SimulatedDiseaseMap> {
    if n == 0 {
        return Err(Error::domain("n must be positive"));
    }
    if !(alpha >= 0.0 && alpha.is_finite()) {
        return Err(Error::domain(format!("alpha = {alpha} must be nonnegative")));
    }
    if !(rho > 0.0 && rho.is_finite()) {
        return Err(Error::domain(format!("rho = {rho} must be positive")));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let points = DMatrix::from_fn(n, 2, |_, _| rng.random_range(0.0..1.0));
    let exposure: Vec<f64> = (0..n)
        .map(|_| rng.random_range(EXPOSURE_RANGE.0..EXPOSURE_RANGE.1))
        .collect();
    let z = DVector::from_fn(n, |_, _| rng.sample::<f64, _>(StandardNormal));
    let theta = if alpha == 0.0 {
        DVector::zeros(n)
    } else {
        let mut k = SquaredExp::new(&points)?.evaluate(&DVector::from_vec(vec![alpha, rho]))?;
        // Nearby points make K numerically singular; a relative nugget keeps the factorization alive.
        let bump = 1e-8 * k.diagonal().mean();
        for i in 0..n {
            k[(i, i)] += bump;
        }
        let l = k.cholesky().ok_or(Error::Cholesky { iteration: None })?.l();
        l * z
    };
    let counts = exposure
        .iter()
        .zip(theta.iter())
        .map(|(&e, &t)| Poisson::new(e * t.exp()).map(|d| d.sample(&mut rng)))
        .collect::<std::result::Result<Vec<f64>, _>>()
        .map_err(|e| Error::domain(format!("Poisson rate: {e}")))?;
    Ok(SimulatedDiseaseMap {
        data: DiseaseMapData {
            points,
            counts,
            exposure,
        },
        theta,
    })
}

fn planted(p: usize, k_true: usize, rng: &mut ChaCha8Rng) -> Result<(Vec<usize>, Vec<f64>)> {
    if k_true > p {
        return Err(Error::domain(format!("k_true = {k_true} exceeds p = {p}")));
    }
    let mut idx = sample(rng, p, k_true).into_vec();
    idx.sort_unstable();
    let mut beta = vec![0.0; p];
    for &i in &idx {
        beta[i] = if rng.random::<bool>() { PLANTED_EFFECT } else { -PLANTED_EFFECT };
    }
    Ok((idx, beta))
}

fn bernoulli_outcomes(eta: &DVector<f64>, rng: &mut ChaCha8Rng) -> Vec<f64> {
    eta.iter()
        .map(|&e| {
            let prob = 1.0 / (1.0 + (-e).exp());
            if rng.random::<f64>() < prob { 1.0 } else { 0.0 }
        })
        .collect()
}

fn regression(
    n: usize,
    p: usize,
    k_true: usize,
    seed: u64,
    with_interaction: bool,
) -> Result<SimulatedRegression> {
    if n == 0 || p == 0 {
        return Err(Error::domain("n and p must be positive"));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let design = DMatrix::from_fn(n, p, |_, _| rng.sample::<f64, _>(StandardNormal));
    let (true_indices, beta) = planted(p, k_true, &mut rng)?;
    let mut eta = &design * DVector::from_column_slice(&beta);
    let mut interactions = Vec::new();
    if with_interaction && true_indices.len() >= 2 {
        let (i, j) = (true_indices[0], true_indices[1]);
        let b = if rng.random::<bool>() { PLANTED_EFFECT } else { -PLANTED_EFFECT };
        for r in 0..n {
            eta[r] += b * design[(r, i)] * design[(r, j)];
        }
        interactions.push((i, j, b));
    }
    let y = bernoulli_outcomes(&eta, &mut rng);
    Ok(SimulatedRegression {
        data: GlmData { design, y },
        truth: RegressionTruth {
            intercept: 0.0,
            true_indices,
            beta,
            interactions,
        },
    })
}

/// Standard-normal design, `k_true` slopes of magnitude 3 with random signs
/// at random columns, zero intercept and logistic outcomes.
pub fn simulate_sparse_glm(n: usize, p: usize, k_true: usize, seed: u64) -> Result<SimulatedRegression> {
    regression(n, p, k_true, seed, false)
}

/// As [`simulate_sparse_glm`], plus one pairwise effect of magnitude 3 between
/// the first two planted columns when `k_true >= 2`.
pub fn simulate_skim(n: usize, p: usize, k_true: usize, seed: u64) -> Result<SimulatedRegression> {
    regression(n, p, k_true, seed, true)
}
