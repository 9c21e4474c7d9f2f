//! The run configuration document read by `fit`.
//!
//! ```json
//! {
//!   "seed": 7,
//!   "method": "laplace",
//!   "model": { "kind": "disease-map", "data": "map.csv",
//!              "priors": { "alpha_shape": 2, "alpha_scale": 2, "rho_shape": 2, "rho_scale": 2 } },
//!   "sampler": { "num_warmup": 500, "num_samples": 500 },
//!   "laplace": { "tolerance": 1e-6 },
//!   "output": { "prefix": "out/map" }
//! }
//! ```
//!
//! Relative paths are resolved against the directory holding the document.
//! The top-level `seed` is mandatory and always replaces `sampler.seed`.

use std::ffi::OsString;
use std::path::{Path, PathBuf};

use nalgebra::DVector;
use serde::{Deserialize, Serialize};

use super::data::{DiseaseMapData, GlmData};
use crate::error::{Error, Result};
use crate::kernels::Intercept;
use crate::laplace::{LaplaceConfig, DEFAULT_JITTER};
use crate::models::{GpPriors, HorseshoeConstants, ModelSpec, TargetKind};
use crate::sampler::SamplerConfig;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub seed: u64,
    #[serde(default = "default_method")]
    pub method: TargetKind,
    pub model: ModelConfig,
    #[serde(default)]
    pub sampler: SamplerConfig,
    #[serde(default)]
    pub laplace: LaplaceSettings,
    pub output: OutputConfig,
}

fn default_method() -> TargetKind {
    TargetKind::Laplace
}

fn default_intercept() -> Intercept {
    Intercept::Identity
}

/// Data source and prior constants of the model.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
pub enum ModelConfig {
    /// Squared-exponential field with Poisson counts; the hyperprior
    /// constants have no defaults and must be given.
    DiseaseMap { data: PathBuf, priors: GpPriors },
    /// Logistic regression under the regularized horseshoe.
    SparseGlm {
        data: PathBuf,
        #[serde(default)]
        horseshoe: HorseshoeConstants,
        #[serde(default = "default_intercept")]
        intercept: Intercept,
    },
    /// Logistic sparse kernel interaction model.
    Skim {
        data: PathBuf,
        #[serde(default)]
        horseshoe: HorseshoeConstants,
    },
}

impl ModelConfig {
    pub fn kind(&self) -> &'static str {
        match self {
            ModelConfig::DiseaseMap { .. } => "disease-map",
            ModelConfig::SparseGlm { .. } => "sparse-glm",
            ModelConfig::Skim { .. } => "skim",
        }
    }

    pub fn data(&self) -> &Path {
        match self {
            ModelConfig::DiseaseMap { data, .. }
            | ModelConfig::SparseGlm { data, .. }
            | ModelConfig::Skim { data, .. } => data,
        }
    }

    fn data_mut(&mut self) -> &mut PathBuf {
        match self {
            ModelConfig::DiseaseMap { data, .. }
            | ModelConfig::SparseGlm { data, .. }
            | ModelConfig::Skim { data, .. } => data,
        }
    }
}

/// Serialized form of [`LaplaceConfig`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LaplaceSettings {
    pub tolerance: f64,
    pub max_iterations: usize,
    pub theta0: Option<Vec<f64>>,
    pub jitter: f64,
}

impl Default for LaplaceSettings {
    fn default() -> Self {
        let d = LaplaceConfig::default();
        Self {
            tolerance: d.tolerance,
            max_iterations: d.max_iterations,
            theta0: None,
            jitter: DEFAULT_JITTER,
        }
    }
}

impl From<&LaplaceSettings> for LaplaceConfig {
    fn from(s: &LaplaceSettings) -> Self {
        LaplaceConfig {
            tolerance: s.tolerance,
            max_iterations: s.max_iterations,
            theta0: s.theta0.as_ref().map(|v| DVector::from_column_slice(v)),
            jitter: s.jitter,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OutputConfig {
    /// Outputs go to `<prefix>.draws.csv` and `<prefix>.diagnostics.json`.
    pub prefix: PathBuf,
}

impl OutputConfig {
    fn with_suffix(&self, suffix: &str) -> PathBuf {
        let mut s = OsString::from(self.prefix.as_os_str());
        s.push(suffix);
        PathBuf::from(s)
    }

    pub fn draws_path(&self) -> PathBuf {
        self.with_suffix(".draws.csv")
    }

    pub fn diagnostics_path(&self) -> PathBuf {
        self.with_suffix(".diagnostics.json")
    }
}

impl RunConfig {
    /// Parses a document; errors carry the path of the offending field.
    pub fn from_json_str(text: &str) -> Result<Self> {
        let de = &mut serde_json::Deserializer::from_str(text);
        serde_path_to_error::deserialize(de).map_err(|e| {
            let path = e.path().to_string();
            let field = if path == "." { "config".to_string() } else { path };
            Error::config(field, e.into_inner().to_string())
        })
    }

    /// Reads a document and resolves its relative paths against its directory.
    pub fn from_file(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::config("config", format!("cannot read {}: {e}", path.display())))?;
        let mut config = Self::from_json_str(&text)?;
        config.resolve_paths(path.parent().unwrap_or(Path::new(".")));
        Ok(config)
    }

    pub fn resolve_paths(&mut self, base: &Path) {
        let data = self.model.data_mut();
        if data.is_relative() {
            *data = base.join(&*data);
        }
        if self.output.prefix.is_relative() {
            self.output.prefix = base.join(&self.output.prefix);
        }
    }

    /// Sampler settings with the run seed applied.
    pub fn sampler_config(&self) -> SamplerConfig {
        SamplerConfig {
            seed: self.seed,
            ..self.sampler.clone()
        }
    }

    /// Checks every setting and that the data file and output directory exist.
    pub fn validate(&self) -> Result<()> {
        self.sampler_config().validate()?;
        LaplaceConfig::from(&self.laplace).validate()?;
        let data = self.model.data();
        if !data.is_file() {
            return Err(Error::config("model.data", format!("no such file: {}", data.display())));
        }
        if self.output.prefix.file_name().is_none() {
            return Err(Error::config("output.prefix", "must end in a file name stem"));
        }
        let dir = match self.output.prefix.parent() {
            Some(d) if !d.as_os_str().is_empty() => d,
            _ => Path::new("."),
        };
        if !dir.is_dir() {
            return Err(Error::config(
                "output.prefix",
                format!("directory {} does not exist", dir.display()),
            ));
        }
        Ok(())
    }

    /// Loads the data set and assembles the posterior.
    pub fn model_spec(&self) -> Result<ModelSpec> {
        let laplace = LaplaceConfig::from(&self.laplace);
        match &self.model {
            ModelConfig::DiseaseMap { data, priors } => {
                let d = DiseaseMapData::read_csv_file(data)?;
                ModelSpec::squared_exp(d.likelihood()?, &d.points, *priors, laplace)
            }
            ModelConfig::SparseGlm {
                data,
                horseshoe,
                intercept,
            } => {
                let d = GlmData::read_csv_file(data)?;
                ModelSpec::sparse_glm(d.likelihood()?, d.design.clone(), *horseshoe, *intercept, laplace)
            }
            ModelConfig::Skim { data, horseshoe } => {
                let d = GlmData::read_csv_file(data)?;
                ModelSpec::skim(d.likelihood()?, d.design.clone(), *horseshoe, laplace)
            }
        }
    }
}
