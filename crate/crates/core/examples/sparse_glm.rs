//! Sparse logistic regression under the regularized horseshoe: 200
//! covariates, 30 observations, 3 planted effects. Ranks covariates by the
//! 90th percentile of `log λ`.
//!
//! ```text
//! cargo run --release --example sparse_glm
//! ```

use embedded_laplace::harness::{rank_local_scales, simulate_sparse_glm};
use embedded_laplace::kernels::Intercept;
use embedded_laplace::laplace::LaplaceConfig;
use embedded_laplace::models::{HorseshoeConstants, LaplaceTarget, ModelSpec};
use embedded_laplace::sampler::{run_chains, SamplerConfig};

fn main() -> embedded_laplace::Result<()> {
    let sim = simulate_sparse_glm(30, 200, 3, 22)?;
    let spec = ModelSpec::sparse_glm(
        sim.data.likelihood()?,
        sim.data.design.clone(),
        HorseshoeConstants::default(),
        Intercept::Shared,
        LaplaceConfig::default(),
    )?;
    let target = LaplaceTarget::new(&spec)?;
    let config = SamplerConfig {
        num_warmup: 500,
        num_samples: 500,
        seed: 1,
        ..Default::default()
    };
    let run = run_chains(&target, &config)?;
    println!(
        "{} draws, {} divergent, {} Newton solves ({} rejected)",
        run.draws.rows(),
        run.total_divergences(),
        target.newton_solves(),
        target.rejections()
    );
    println!("planted covariates: {:?}", sim.truth.true_indices);
    for (rank, r) in rank_local_scales(&run.draws, 0.9)?.iter().take(6).enumerate() {
        let mark = if sim.truth.true_indices.contains(&r.index) { "  <- planted" } else { "" };
        println!("{:>2}. covariate {:>3}  q90(log lambda) = {:.2}{mark}", rank + 1, r.index, r.quantile_log);
    }
    Ok(())
}
