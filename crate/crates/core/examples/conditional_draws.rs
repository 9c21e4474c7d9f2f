//! Recovering the latent field after sampling the hyperparameters: one
//! draw from the Gaussian approximation of `π(θ | y, φ)` per posterior draw
//! of `φ`.
//!
//! ```text
//! cargo run --release --example conditional_draws
//! ```

use embedded_laplace::harness::simulate_disease_map;
use embedded_laplace::laplace::LaplaceConfig;
use embedded_laplace::models::{quantile_summary, recover_latents, GpPriors, LaplaceTarget, ModelSpec};
use embedded_laplace::sampler::{run_chains, SamplerConfig};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn main() -> embedded_laplace::Result<()> {
    let sim = simulate_disease_map(25, 1.0, 0.3, 7)?;
    let spec = ModelSpec::squared_exp(
        sim.data.likelihood()?,
        &sim.data.points,
        GpPriors::default(),
        LaplaceConfig::default(),
    )?;
    let target = LaplaceTarget::new(&spec)?;
    let config = SamplerConfig {
        num_warmup: 300,
        num_samples: 250,
        seed: 2,
        ..Default::default()
    };
    let run = run_chains(&target, &config)?;

    // The draws table holds φ on the constrained scale, columns in parameter order.
    let theta = recover_latents(&spec, &run.draws.values, &mut ChaCha8Rng::seed_from_u64(9))?;
    let lo = quantile_summary(&theta, 0.05)?;
    let mid = quantile_summary(&theta, 0.5)?;
    let hi = quantile_summary(&theta, 0.95)?;
    let covered = (0..theta.ncols())
        .filter(|&i| lo[i] <= sim.theta[i] && sim.theta[i] <= hi[i])
        .count();
    println!("{} latent draws of dimension {}", theta.nrows(), theta.ncols());
    println!("area   true    median   90% interval");
    for i in 0..8 {
        println!("{i:>4} {:>7.3} {:>8.3}   [{:.3}, {:.3}]", sim.theta[i], mid[i], lo[i], hi[i]);
    }
    println!("{covered} of {} true values inside their 90% interval", theta.ncols());
    Ok(())
}
