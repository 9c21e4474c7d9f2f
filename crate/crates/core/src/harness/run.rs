//! The `fit` and `diagnose` drivers and their JSON reports.

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};
use std::time::Instant;

use serde::{Deserialize, Serialize};

use super::config::RunConfig;
use crate::diagnostics::{quantile, summarize, ColumnSummary};
use crate::draws::DrawsTable;
use crate::error::{Error, Result};
use crate::models::{unconstrained_target, ModelTarget, TargetKind};
use crate::sampler::{run_chains, SamplerConfig, SamplerRun};

/// Identifies the layout of the fit report.
pub const FIT_REPORT_FORMAT: &str = "elaplace-fit/1";

/// Diagnostics that depend only on the draws, so `diagnose` can recompute
/// them from the CSV files.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DiagnosticsReport {
    pub chains: usize,
    pub draws: usize,
    /// Sampling-phase divergent transitions, per chain.
    pub divergences: Vec<usize>,
    pub total_divergences: usize,
    /// Largest split-R̂ over columns with a defined value.
    pub max_rhat: Option<f64>,
    pub min_ess: Option<f64>,
    pub parameters: Vec<ColumnSummary>,
}

/// Adapted sampler state of one chain.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChainReport {
    pub chain: usize,
    pub stepsize: f64,
    pub inv_metric: Vec<f64>,
    pub divergences: usize,
    pub warmup_divergences: usize,
}

/// Wall-clock times in seconds. The only nondeterministic part of a report.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Timing {
    pub warmup_seconds: Vec<f64>,
    pub sampling_seconds: Vec<f64>,
    pub total_seconds: f64,
}

/// Work done by the embedded Laplace target.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct LaplaceCounters {
    pub evaluations: usize,
    pub newton_solves: usize,
    /// Evaluations rejected because the inner solve failed.
    pub rejections: usize,
}

/// One local scale ranked by a quantile of its logarithm.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RankedScale {
    /// Covariate index (0-based).
    pub index: usize,
    pub name: String,
    pub quantile_log: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitReport {
    pub format: String,
    pub model: String,
    pub method: TargetKind,
    pub seed: u64,
    pub sampler: SamplerConfig,
    pub chain_reports: Vec<ChainReport>,
    pub timing: Timing,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub laplace: Option<LaplaceCounters>,
    /// Top local scales by the 90th percentile of `log λ`, for horseshoe models.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub selection: Option<Vec<RankedScale>>,
    pub diagnostics: DiagnosticsReport,
}

/// Everything a fit produced.
#[derive(Debug, Clone)]
pub struct FitOutcome {
    pub run: SamplerRun,
    pub report: FitReport,
    pub draws_path: PathBuf,
    pub diagnostics_path: PathBuf,
}

/// Summaries, divergence tallies and convergence extremes of a table.
pub fn diagnose_table(table: &DrawsTable) -> Result<DiagnosticsReport> {
    let parameters = summarize(table)?;
    let divergences = table.divergences_per_chain();
    let max_rhat = parameters.iter().filter_map(|c| c.rhat).reduce(f64::max);
    let min_ess = parameters.iter().filter_map(|c| c.ess).reduce(f64::min);
    Ok(DiagnosticsReport {
        chains: table.n_chains(),
        draws: table.rows(),
        total_divergences: divergences.iter().sum(),
        divergences,
        max_rhat,
        min_ess,
        parameters,
    })
}

/// Reads one or more draws files, concatenates them and diagnoses the result.
pub fn diagnose(paths: &[PathBuf]) -> Result<DiagnosticsReport> {
    if paths.is_empty() {
        return Err(Error::config("draws", "at least one draws file is required"));
    }
    let tables = paths
        .iter()
        .map(|p| DrawsTable::read_csv_file(p))
        .collect::<Result<Vec<_>>>()?;
    let table = if tables.len() == 1 {
        tables.into_iter().next().expect("one table")
    } else {
        DrawsTable::concat(&tables)?
    };
    diagnose_table(&table)
}

/// Columns named `lambda[i]`, ranked by the `q`-quantile of their logarithm,
/// largest first. Ties keep index order.
pub fn rank_local_scales(table: &DrawsTable, q: f64) -> Result<Vec<RankedScale>> {
    let mut ranked = Vec::new();
    for (j, name) in table.names.iter().enumerate() {
        let Some(index) = name
            .strip_prefix("lambda[")
            .and_then(|s| s.strip_suffix(']'))
            .and_then(|s| s.parse::<usize>().ok())
        else {
            continue;
        };
        let logs: Vec<f64> = table.values.column(j).iter().map(|v| v.ln()).collect();
        ranked.push(RankedScale {
            index,
            name: name.clone(),
            quantile_log: quantile(&logs, q)?,
        });
    }
    ranked.sort_by(|a, b| b.quantile_log.total_cmp(&a.quantile_log));
    Ok(ranked)
}

/// Number of ranked scales kept in the report.
const SELECTION_SIZE: usize = 10;

/// Runs the sampler on the configured model and writes
/// `<prefix>.draws.csv` and `<prefix>.diagnostics.json`. On failure neither
/// file is left behind.
pub fn fit(config: &RunConfig) -> Result<FitOutcome> {
    config.validate()?;
    let draws_path = config.output.draws_path();
    let diagnostics_path = config.output.diagnostics_path();
    let result = fit_inner(config, &draws_path, &diagnostics_path);
    if result.is_err() {
        for p in [&draws_path, &diagnostics_path] {
            if p.exists() {
                let _ = std::fs::remove_file(p);
            }
        }
    }
    result
}

fn fit_inner(config: &RunConfig, draws_path: &Path, diagnostics_path: &Path) -> Result<FitOutcome> {
    let start = Instant::now();
    let spec = config.model_spec()?;
    let sampler = config.sampler_config();
    let target = unconstrained_target(&spec, config.method)?;
    let run = run_chains(&target, &sampler)?;
    let laplace = match &target {
        ModelTarget::Laplace(t) => Some(LaplaceCounters {
            evaluations: t.evaluations(),
            newton_solves: t.newton_solves(),
            rejections: t.rejections(),
        }),
        ModelTarget::FullJoint(_) => None,
    };

    run.draws.write_csv_file(draws_path)?;
    let diagnostics = diagnose_table(&run.draws)?;
    let selection = if run.draws.names.iter().any(|n| n.starts_with("lambda[")) {
        let mut ranked = rank_local_scales(&run.draws, 0.9)?;
        ranked.truncate(SELECTION_SIZE);
        Some(ranked)
    } else {
        None
    };
    let report = FitReport {
        format: FIT_REPORT_FORMAT.to_string(),
        model: config.model.kind().to_string(),
        method: config.method,
        seed: config.seed,
        sampler,
        chain_reports: run
            .chains
            .iter()
            .map(|c| ChainReport {
                chain: c.chain,
                stepsize: c.stepsize,
                inv_metric: c.inv_metric.clone(),
                divergences: c.divergences,
                warmup_divergences: c.warmup_divergences,
            })
            .collect(),
        timing: Timing {
            warmup_seconds: run.chains.iter().map(|c| c.warmup_seconds).collect(),
            sampling_seconds: run.chains.iter().map(|c| c.sampling_seconds).collect(),
            total_seconds: start.elapsed().as_secs_f64(),
        },
        laplace,
        selection,
        diagnostics,
    };
    write_json(diagnostics_path, &report)?;
    Ok(FitOutcome {
        run,
        report,
        draws_path: draws_path.to_path_buf(),
        diagnostics_path: diagnostics_path.to_path_buf(),
    })
}

/// Pretty-printed JSON with a trailing newline.
pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    serde_json::to_writer_pretty(&mut w, value)?;
    w.write_all(b"\n")?;
    w.flush()?;
    Ok(())
}
