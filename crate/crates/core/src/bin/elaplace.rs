//! Command-line front end: simulate, fit, benchmark, diagnose.

use std::fs::File;
use std::io::BufWriter;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};
use embedded_laplace::harness::{
    benchmark_differentiation, diagnose, fit, simulate_disease_map, simulate_skim, simulate_sparse_glm,
    write_benchmark_csv, write_json, BenchmarkConfig, RunConfig,
};
use embedded_laplace::models::TargetKind;
use embedded_laplace::Result;
use serde_json::json;

#[derive(Parser)]
#[command(name = "elaplace", version, about = "Embedded Laplace approximation with adjoint gradients and HMC")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, ValueEnum)]
enum SimModel {
    DiseaseMap,
    SparseGlm,
    Skim,
}

#[derive(Clone, Copy, ValueEnum)]
enum Method {
    Laplace,
    #[value(alias = "full-joint")]
    Full,
}

#[derive(Subcommand)]
enum Command {
    /// Write a synthetic data set as CSV.
    Simulate {
        #[arg(long, value_enum)]
        model: SimModel,
        #[arg(long)]
        n: usize,
        /// Covariates (regression models).
        #[arg(long, default_value_t = 200)]
        p: usize,
        /// Planted nonzero slopes (regression models).
        #[arg(long, default_value_t = 3)]
        k_true: usize,
        /// Marginal standard deviation of the latent field (disease map).
        #[arg(long, default_value_t = 1.0)]
        alpha: f64,
        /// Length scale of the latent field (disease map).
        #[arg(long, default_value_t = 0.3)]
        rho: f64,
        #[arg(long)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
        /// Also write the generating values as JSON.
        #[arg(long)]
        truth: Option<PathBuf>,
    },
    /// Sample a posterior described by a run configuration.
    Fit {
        #[arg(long)]
        config: PathBuf,
        #[arg(long, value_enum)]
        method: Option<Method>,
        #[arg(long)]
        out_prefix: Option<PathBuf>,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        data: Option<PathBuf>,
        #[arg(long)]
        num_warmup: Option<usize>,
        #[arg(long)]
        num_samples: Option<usize>,
        #[arg(long)]
        num_chains: Option<usize>,
        #[arg(long)]
        target_accept: Option<f64>,
    },
    /// Time the reference and adjoint gradients over a grid of sizes.
    Benchmark {
        #[arg(long, value_delimiter = ',', default_values_t = vec![2, 20, 50, 100, 200])]
        p_grid: Vec<usize>,
        #[arg(long, default_value_t = 20)]
        reps: usize,
        #[arg(long, default_value_t = 30)]
        n: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
    },
    /// Recompute diagnostics from draws files.
    Diagnose {
        #[arg(long, required = true)]
        draws: Vec<PathBuf>,
        /// Write the report here instead of standard output.
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

fn main() -> ExitCode {
    match run(Cli::parse().command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}

fn run(command: Command) -> Result<()> {
    match command {
        Command::Simulate {
            model,
            n,
            p,
            k_true,
            alpha,
            rho,
            seed,
            out,
            truth,
        } => {
            let truth_json = match model {
                SimModel::DiseaseMap => {
                    let sim = simulate_disease_map(n, alpha, rho, seed)?;
                    sim.data.write_csv_file(&out)?;
                    json!({ "alpha": alpha, "rho": rho, "theta": sim.theta.as_slice() })
                }
                SimModel::SparseGlm | SimModel::Skim => {
                    let sim = match model {
                        SimModel::Skim => simulate_skim(n, p, k_true, seed)?,
                        _ => simulate_sparse_glm(n, p, k_true, seed)?,
                    };
                    sim.data.write_csv_file(&out)?;
                    serde_json::to_value(&sim.truth)?
                }
            };
            if let Some(path) = truth {
                write_json(&path, &truth_json)?;
            }
            Ok(())
        }
        Command::Fit {
            config,
            method,
            out_prefix,
            seed,
            data,
            num_warmup,
            num_samples,
            num_chains,
            target_accept,
        } => {
            let mut cfg = RunConfig::from_file(&config)?;
            // Flags take precedence over the file; paths given on the command line are relative to the working directory.
            if let Some(m) = method {
                cfg.method = match m {
                    Method::Laplace => TargetKind::Laplace,
                    Method::Full => TargetKind::FullJoint,
                };
            }
            if let Some(p) = out_prefix {
                cfg.output.prefix = p;
            }
            if let Some(s) = seed {
                cfg.seed = s;
            }
            if let Some(d) = data {
                set_data(&mut cfg, d);
            }
            if let Some(v) = num_warmup {
                cfg.sampler.num_warmup = v;
            }
            if let Some(v) = num_samples {
                cfg.sampler.num_samples = v;
            }
            if let Some(v) = num_chains {
                cfg.sampler.num_chains = v;
            }
            if let Some(v) = target_accept {
                cfg.sampler.target_accept = v;
            }
            let outcome = fit(&cfg)?;
            let d = &outcome.report.diagnostics;
            eprintln!(
                "{} draws from {} chains, {} divergent; max R-hat {}",
                d.draws,
                d.chains,
                d.total_divergences,
                d.max_rhat.map_or("n/a".to_string(), |r| format!("{r:.3}"))
            );
            eprintln!("wrote {} and {}", outcome.draws_path.display(), outcome.diagnostics_path.display());
            Ok(())
        }
        Command::Benchmark {
            p_grid,
            reps,
            n,
            seed,
            out,
        } => {
            let records = benchmark_differentiation(&BenchmarkConfig { p_grid, n, reps, seed })?;
            write_benchmark_csv(&records, BufWriter::new(File::create(&out)?))
        }
        Command::Diagnose { draws, out } => {
            let report = diagnose(&draws)?;
            match out {
                Some(path) => write_json(&path, &report),
                None => {
                    println!("{}", serde_json::to_string_pretty(&report)?);
                    Ok(())
                }
            }
        }
    }
}

fn set_data(cfg: &mut RunConfig, path: PathBuf) {
    use embedded_laplace::harness::ModelConfig;
    let slot = match &mut cfg.model {
        ModelConfig::DiseaseMap { data, .. } | ModelConfig::SparseGlm { data, .. } | ModelConfig::Skim { data, .. } => {
            data
        }
    };
    *slot = path;
}

