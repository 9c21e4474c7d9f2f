//! Disease mapping: a Gaussian-process log relative risk over 2-d locations
//! with Poisson counts. Simulates a map, samples the hyperparameters with
//! the embedded Laplace target and with the full joint, and compares them.
//!
//! ```text
//! cargo run --release --example disease_map
//! ```

use std::time::Instant;

use embedded_laplace::diagnostics::summarize;
use embedded_laplace::harness::simulate_disease_map;
use embedded_laplace::laplace::LaplaceConfig;
use embedded_laplace::models::{unconstrained_target, GpPriors, ModelSpec, TargetKind};
use embedded_laplace::sampler::{run_chains, SamplerConfig};

fn main() -> embedded_laplace::Result<()> {
    let sim = simulate_disease_map(40, 1.0, 0.3, 11)?;
    let spec = ModelSpec::squared_exp(
        sim.data.likelihood()?,
        &sim.data.points,
        GpPriors::default(),
        LaplaceConfig::default(),
    )?;
    let config = SamplerConfig {
        num_warmup: 500,
        num_samples: 500,
        seed: 1,
        ..Default::default()
    };

    println!("truth: alpha = 1.0, rho = 0.3");
    for kind in [TargetKind::Laplace, TargetKind::FullJoint] {
        let target = unconstrained_target(&spec, kind)?;
        let start = Instant::now();
        let run = run_chains(&target, &config)?;
        let summaries = summarize(&run.draws)?;
        println!("\n{kind:?}: {:.1} s, {} divergent", start.elapsed().as_secs_f64(), run.total_divergences());
        for s in summaries.iter().take(2) {
            println!(
                "  {:<6} mean {:.3} (mcse {:.3})  90% interval [{:.3}, {:.3}]  R-hat {:.3}",
                s.name,
                s.mean,
                s.mcse_mean.unwrap_or(f64::NAN),
                s.q05,
                s.q95,
                s.rhat.unwrap_or(f64::NAN)
            );
        }
    }
    Ok(())
}
