//! Dynamic Hamiltonian Monte Carlo over an unconstrained space.
//!
//! Transitions use multinomial sampling along a trajectory that doubles until
//! the generalized no-U-turn criterion fires, with a diagonal metric. Warmup
//! adapts the step size by dual averaging and the metric in doubling windows
//! (see [`adapt`]). Chains run in parallel, each on its own RNG stream, so a
//! run is reproducible from `(seed, config, target)` alone.

mod adapt;
mod nuts;

use std::time::Instant;

use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

pub use adapt::{adapt, find_reasonable_stepsize, Adapted, DualAveraging, Phase, WarmupSchedule};
pub use nuts::{leapfrog, nuts_draw, DrawStats, PhasePoint};

use crate::draws::DrawsTable;
use crate::error::{Error, Result};

/// A log density on `R^dim` with its gradient.
///
/// Implementations must be deterministic in the point and safe to call from
/// several threads at once. Returning `−∞` (or a non-finite gradient) marks
/// the point as outside the usable region; the sampler rejects it and flags
/// the transition as divergent. Returning `Err` aborts the run.
pub trait TargetDensity: Sync {
    fn dim(&self) -> usize;

    /// Writes `∇ log π(x)` into `grad` and returns `log π(x)`.
    fn log_density_gradient(&self, x: &[f64], grad: &mut [f64]) -> Result<f64>;

    /// Names of the values produced by [`TargetDensity::constrain`].
    fn param_names(&self) -> Vec<String> {
        (0..self.dim()).map(|i| format!("x[{i}]")).collect()
    }

    /// Maps an unconstrained point to the values recorded in the draws table.
    fn constrain(&self, x: &[f64]) -> Vec<f64> {
        x.to_vec()
    }
}

impl<T: TargetDensity + ?Sized> TargetDensity for &T {
    fn dim(&self) -> usize {
        (**self).dim()
    }
    fn log_density_gradient(&self, x: &[f64], grad: &mut [f64]) -> Result<f64> {
        (**self).log_density_gradient(x, grad)
    }
    fn param_names(&self) -> Vec<String> {
        (**self).param_names()
    }
    fn constrain(&self, x: &[f64]) -> Vec<f64> {
        (**self).constrain(x)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SamplerConfig {
    pub target_accept: f64,
    pub max_tree_depth: usize,
    /// Energy error above which a transition is flagged divergent.
    pub max_energy_error: f64,
    pub num_warmup: usize,
    pub num_samples: usize,
    pub num_chains: usize,
    pub init_buffer: usize,
    /// Length of the first slow window; later windows double.
    pub adapt_window: usize,
    pub term_buffer: usize,
    /// Starting point of the step-size search.
    pub initial_stepsize: f64,
    /// Initial points are drawn uniformly from `(−r, r)` per coordinate.
    pub init_radius: f64,
    pub seed: u64,
}

impl Default for SamplerConfig {
    fn default() -> Self {
        Self {
            target_accept: 0.8,
            max_tree_depth: 10,
            max_energy_error: 1000.0,
            num_warmup: 1000,
            num_samples: 1000,
            num_chains: 4,
            init_buffer: 75,
            adapt_window: 25,
            term_buffer: 50,
            initial_stepsize: 1.0,
            init_radius: 2.0,
            seed: 0,
        }
    }
}

impl SamplerConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.target_accept > 0.0 && self.target_accept < 1.0) {
            return Err(Error::config("sampler.target_accept", "must lie in (0, 1)"));
        }
        if self.max_tree_depth == 0 {
            return Err(Error::config("sampler.max_tree_depth", "must be >= 1"));
        }
        if !(self.max_energy_error > 0.0) {
            return Err(Error::config("sampler.max_energy_error", "must be > 0"));
        }
        if self.num_chains == 0 {
            return Err(Error::config("sampler.num_chains", "must be >= 1"));
        }
        if !(self.initial_stepsize > 0.0 && self.initial_stepsize.is_finite()) {
            return Err(Error::config("sampler.initial_stepsize", "must be positive and finite"));
        }
        if !(self.init_radius >= 0.0 && self.init_radius.is_finite()) {
            return Err(Error::config("sampler.init_radius", "must be nonnegative and finite"));
        }
        self.schedule().map(|_| ())
    }

    pub fn schedule(&self) -> Result<WarmupSchedule> {
        WarmupSchedule::new(self.num_warmup, self.init_buffer, self.adapt_window, self.term_buffer)
            .map_err(|e| match e {
                Error::Config { field, reason } => Error::config(format!("sampler.{field}"), reason),
                other => other,
            })
    }
}

/// Per-chain adaptation results and timings.
#[derive(Debug, Clone, PartialEq)]
pub struct ChainSummary {
    pub chain: usize,
    pub stepsize: f64,
    pub inv_metric: Vec<f64>,
    pub divergences: usize,
    pub warmup_divergences: usize,
    pub warmup_seconds: f64,
    pub sampling_seconds: f64,
}

/// Output of [`run_chains`]. The draws are deterministic; timings are not.
#[derive(Debug, Clone)]
pub struct SamplerRun {
    pub draws: DrawsTable,
    pub chains: Vec<ChainSummary>,
}

impl SamplerRun {
    pub fn total_divergences(&self) -> usize {
        self.chains.iter().map(|c| c.divergences).sum()
    }
}

/// The RNG for chain `chain`: one seed, independent streams.
pub fn chain_rng(seed: u64, chain: usize) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(chain as u64);
    rng
}

fn initial_point<T: TargetDensity + ?Sized, R: Rng + ?Sized>(
    target: &T,
    config: &SamplerConfig,
    rng: &mut R,
) -> Result<PhasePoint> {
    let dim = target.dim();
    for _ in 0..100 {
        let q: Vec<f64> = (0..dim)
            .map(|_| {
                if config.init_radius == 0.0 {
                    0.0
                } else {
                    rng.random_range(-config.init_radius..config.init_radius)
                }
            })
            .collect();
        let z = PhasePoint::new(target, q, vec![0.0; dim])?;
        if z.log_density.is_finite() && z.gradient.iter().all(|g| g.is_finite()) {
            return Ok(z);
        }
    }
    Err(Error::domain("no finite initial point found after 100 attempts"))
}

/// Runs one chain: initialization, warmup, sampling.
pub fn run_chain<T: TargetDensity + ?Sized>(
    target: &T,
    config: &SamplerConfig,
    chain: usize,
) -> Result<(DrawsTable, ChainSummary)> {
    let wrap = |draw: usize| move |e: Error| Error::Target {
        chain,
        draw,
        source: Box::new(e),
    };
    let mut rng = chain_rng(config.seed, chain);

    let t0 = Instant::now();
    let init = initial_point(target, config, &mut rng).map_err(wrap(0))?;
    let adapted = adapt(target, init, config, &mut rng).map_err(|e| match e {
        Error::Config { .. } => e,
        other => wrap(0)(other),
    })?;
    let warmup_seconds = t0.elapsed().as_secs_f64();

    let t1 = Instant::now();
    let names = target.param_names();
    let mut values = DMatrix::zeros(config.num_samples, names.len());
    let mut stats = Vec::with_capacity(config.num_samples);
    let mut z = adapted.point;
    for d in 0..config.num_samples {
        let (next, s) = nuts_draw(target, &z, adapted.stepsize, &adapted.inv_metric, &mut rng, config)
            .map_err(wrap(config.num_warmup + d))?;
        z = next;
        let out = target.constrain(&z.position);
        if out.len() != names.len() {
            return Err(Error::contract(format!(
                "constrain returned {} values for {} names",
                out.len(),
                names.len()
            )));
        }
        values.row_mut(d).copy_from_slice(&out);
        stats.push(s);
    }
    let sampling_seconds = t1.elapsed().as_secs_f64();

    let divergences = stats.iter().filter(|s| s.divergent).count();
    let table = DrawsTable::new(
        names,
        vec![chain; config.num_samples],
        (0..config.num_samples).collect(),
        values,
        stats,
    )?;
    let summary = ChainSummary {
        chain,
        stepsize: adapted.stepsize,
        inv_metric: adapted.inv_metric,
        divergences,
        warmup_divergences: adapted.warmup_stats.iter().filter(|s| s.divergent).count(),
        warmup_seconds,
        sampling_seconds,
    };
    Ok((table, summary))
}

/// Runs `config.num_chains` independent chains in parallel, one thread each.
pub fn run_chains<T: TargetDensity + ?Sized>(target: &T, config: &SamplerConfig) -> Result<SamplerRun> {
    config.validate()?;
    let results: Vec<Result<(DrawsTable, ChainSummary)>> = std::thread::scope(|s| {
        let handles: Vec<_> = (0..config.num_chains)
            .map(|c| s.spawn(move || run_chain(target, config, c)))
            .collect();
        handles
            .into_iter()
            .map(|h| h.join().unwrap_or_else(|p| std::panic::resume_unwind(p)))
            .collect()
    });
    let mut tables = Vec::with_capacity(results.len());
    let mut chains = Vec::with_capacity(results.len());
    for r in results {
        let (t, c) = r?;
        tables.push(t);
        chains.push(c);
    }
    Ok(SamplerRun {
        draws: DrawsTable::concat(&tables)?,
        chains,
    })
}
