//! Wall time of the two gradient routes as the number of hyperparameters grows.
//!
//! Each grid point builds a SKIM fixture on the scalar tape, so the reference
//! route pays one forward sweep per hyperparameter and the adjoint route one
//! reverse sweep in total, as in an automatic-differentiation setting. The
//! Newton solve runs once per grid point and is excluded from the timings.

use std::io::Write;
use std::time::{Duration, Instant};

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::kernels::{Covariance, TapeKernel};
use crate::laplace::{grad_adjoint, grad_reference, newton_solve, HyperGradient, LaplaceConfig, NewtonState};
use crate::likelihoods::LikelihoodModel;

/// Smallest measured batch; shorter calls are repeated inside one timing.
const MIN_BATCH: Duration = Duration::from_millis(10);

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum GradientMethod {
    Reference,
    Adjoint,
}

impl GradientMethod {
    pub fn as_str(self) -> &'static str {
        match self {
            GradientMethod::Reference => "reference",
            GradientMethod::Adjoint => "adjoint",
        }
    }
}

/// One timed gradient route at one grid point.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BenchmarkRecord {
    /// Number of covariates of the SKIM fixture.
    pub p: usize,
    /// Hyperparameter count, `p + 3`.
    pub dim_phi: usize,
    pub n: usize,
    pub method: GradientMethod,
    /// Median wall time of one gradient call.
    pub seconds_per_call: f64,
    /// Kernel derivative sweeps performed by one call.
    pub sweeps: usize,
    /// Timed repetitions (each a batch of `batch` calls).
    pub reps: usize,
    pub batch: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct BenchmarkConfig {
    pub p_grid: Vec<usize>,
    pub n: usize,
    pub reps: usize,
    pub seed: u64,
}

impl Default for BenchmarkConfig {
    fn default() -> Self {
        Self {
            p_grid: vec![2, 20, 50, 100, 200],
            n: 30,
            reps: 20,
            seed: 0,
        }
    }
}

/// Poisson SKIM fixture with `p` covariates and a fixed hyperparameter point.
pub struct SkimFixture {
    pub likelihood: LikelihoodModel,
    pub kernel: TapeKernel,
    pub phi: DVector<f64>,
}

impl SkimFixture {
    pub fn new(n: usize, p: usize, seed: u64) -> Result<Self> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed ^ (p as u64).rotate_left(32));
        let scale = 1.0 / (p as f64).sqrt();
        let design = DMatrix::from_fn(n, p, |_, _| scale * rng.sample::<f64, _>(StandardNormal));
        let counts: Vec<f64> = (0..n).map(|_| rng.random_range(0..6) as f64).collect();
        let likelihood = LikelihoodModel::poisson_log(&counts, &vec![1; n], None)?;
        let kernel = TapeKernel::skim(&design, 2.0, 1.0)?;
        let phi = DVector::from_fn(p + 3, |i, _| if i == 0 { 0.3 } else { rng.random_range(0.5..1.5) });
        Ok(Self {
            likelihood,
            kernel,
            phi,
        })
    }

    pub fn solve(&self) -> Result<NewtonState> {
        newton_solve(&self.likelihood, &self.kernel, &self.phi, &LaplaceConfig::default())
    }

    pub fn gradient(&self, state: &NewtonState, method: GradientMethod) -> Result<HyperGradient> {
        match method {
            GradientMethod::Reference => grad_reference(state, &self.likelihood, &self.kernel, &self.phi),
            GradientMethod::Adjoint => grad_adjoint(state, &self.likelihood, &self.kernel, &self.phi),
        }
    }
}

fn median(mut v: Vec<f64>) -> f64 {
    v.sort_by(f64::total_cmp);
    let m = v.len() / 2;
    if v.len() % 2 == 1 {
        v[m]
    } else {
        0.5 * (v[m - 1] + v[m])
    }
}

fn time_method(fx: &SkimFixture, state: &NewtonState, method: GradientMethod, reps: usize) -> Result<(f64, usize, usize)> {
    // Warm call, which also fixes the batch size so every timing clears the clock's resolution.
    let start = Instant::now();
    let sweeps = fx.gradient(state, method)?.kernel_sweeps;
    let once = start.elapsed();
    let batch = if once >= MIN_BATCH {
        1
    } else {
        (MIN_BATCH.as_secs_f64() / once.as_secs_f64().max(1e-9)).ceil() as usize
    };
    let mut times = Vec::with_capacity(reps);
    for _ in 0..reps {
        let start = Instant::now();
        for _ in 0..batch {
            std::hint::black_box(fx.gradient(state, method)?);
        }
        times.push(start.elapsed().as_secs_f64() / batch as f64);
    }
    Ok((median(times), sweeps, batch))
}

/// Times both gradient routes over the grid on the calling thread.
///
/// Fails if a route's sweep count differs from `dim φ` (reference) or 1
/// (adjoint), or if the two gradients disagree beyond `1e-8` relative.
pub fn benchmark_differentiation(config: &BenchmarkConfig) -> Result<Vec<BenchmarkRecord>> {
    if config.reps < 20 {
        return Err(Error::config("reps", "at least 20 repetitions are required for a stable median"));
    }
    if config.p_grid.is_empty() || config.p_grid.contains(&0) {
        return Err(Error::config("p_grid", "must be a nonempty list of positive sizes"));
    }
    if config.n < 2 {
        return Err(Error::config("n", "must be >= 2"));
    }
    let mut records = Vec::with_capacity(2 * config.p_grid.len());
    for &p in &config.p_grid {
        let fx = SkimFixture::new(config.n, p, config.seed)?;
        let state = fx.solve()?;
        let dim_phi = fx.kernel.n_params();
        let reference = fx.gradient(&state, GradientMethod::Reference)?.gradient;
        let adjoint = fx.gradient(&state, GradientMethod::Adjoint)?.gradient;
        let err = (&reference - &adjoint).amax() / (1.0 + reference.amax());
        if err > 1e-8 {
            return Err(Error::domain(format!("gradient routes disagree at p = {p}: {err:e}")));
        }
        for method in [GradientMethod::Reference, GradientMethod::Adjoint] {
            let (seconds, sweeps, batch) = time_method(&fx, &state, method, config.reps)?;
            let expected = match method {
                GradientMethod::Reference => dim_phi,
                GradientMethod::Adjoint => 1,
            };
            if sweeps != expected {
                return Err(Error::domain(format!(
                    "{} gradient used {sweeps} sweeps at p = {p}, expected {expected}",
                    method.as_str()
                )));
            }
            records.push(BenchmarkRecord {
                p,
                dim_phi,
                n: config.n,
                method,
                seconds_per_call: seconds,
                sweeps,
                reps: config.reps,
                batch,
            });
        }
    }
    Ok(records)
}

/// Reference time over adjoint time for every grid point, in grid order.
pub fn speedups(records: &[BenchmarkRecord]) -> Vec<(usize, f64)> {
    let mut out = Vec::new();
    for r in records.iter().filter(|r| r.method == GradientMethod::Reference) {
        if let Some(a) = records
            .iter()
            .find(|a| a.method == GradientMethod::Adjoint && a.p == r.p && a.n == r.n)
        {
            out.push((r.p, r.seconds_per_call / a.seconds_per_call));
        }
    }
    out
}

pub fn write_benchmark_csv<W: Write>(records: &[BenchmarkRecord], out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    for r in records {
        w.serialize(r)?;
    }
    w.flush()?;
    Ok(())
}
