//! Simulators, experiment drivers, file formats and the differentiation
//! benchmark. The `elaplace` binary is a thin layer over this module.

mod benchmark;
mod config;
mod data;
mod run;
mod simulate;

pub use benchmark::{
    benchmark_differentiation, speedups, write_benchmark_csv, BenchmarkConfig, BenchmarkRecord, GradientMethod,
    SkimFixture,
};
pub use config::{LaplaceSettings, ModelConfig, OutputConfig, RunConfig};
pub use data::{DiseaseMapData, GlmData};
pub use run::{
    diagnose, diagnose_table, fit, rank_local_scales, write_json, ChainReport, DiagnosticsReport, FitOutcome,
    FitReport, LaplaceCounters, RankedScale, Timing, FIT_REPORT_FORMAT,
};
pub use simulate::{
    simulate_disease_map, simulate_skim, simulate_sparse_glm, RegressionTruth, SimulatedDiseaseMap,
    SimulatedRegression, PLANTED_EFFECT,
};
