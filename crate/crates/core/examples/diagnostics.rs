//! Writing draws to CSV and recomputing the diagnostics report from the
//! file, as the `diagnose` command does.
//!
//! ```text
//! cargo run --release --example diagnostics
//! ```

use embedded_laplace::error::Result;
use embedded_laplace::harness::{diagnose, diagnose_table};
use embedded_laplace::sampler::{run_chains, SamplerConfig, TargetDensity};

/// A correlated bivariate Gaussian.
struct Correlated;

impl TargetDensity for Correlated {
    fn dim(&self) -> usize {
        2
    }

    fn log_density_gradient(&self, x: &[f64], g: &mut [f64]) -> Result<f64> {
        let r = 0.95;
        let d = 1.0 - r * r;
        g[0] = -(x[0] - r * x[1]) / d;
        g[1] = -(x[1] - r * x[0]) / d;
        Ok(-0.5 * (x[0] * x[0] - 2.0 * r * x[0] * x[1] + x[1] * x[1]) / d)
    }

    fn param_names(&self) -> Vec<String> {
        vec!["a".into(), "b".into()]
    }
}

fn main() -> Result<()> {
    let run = run_chains(&Correlated, &SamplerConfig { seed: 4, ..Default::default() })?;
    let dir = std::env::temp_dir().join("elaplace-diagnostics-example");
    std::fs::create_dir_all(&dir)?;
    let path = dir.join("draws.csv");
    run.draws.write_csv_file(&path)?;

    let from_file = diagnose(std::slice::from_ref(&path))?;
    assert_eq!(from_file, diagnose_table(&run.draws)?);
    println!("{}", serde_json::to_string_pretty(&from_file)?);
    println!("draws written to {}", path.display());
    Ok(())
}
