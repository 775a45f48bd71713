use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::losses::{Aggregation, LossKind};
use crate::metrics::SelectionMetric;
use crate::nn::{Activation, DEFAULT_MAX_NEURONS};
use crate::optim::AdamConfig;

use super::arch::{ArchitectureKind, ArchitectureSpec};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DatasetConfig {
    pub manifest: PathBuf,
    #[serde(default = "yes")]
    pub normalize: bool,
}

fn yes() -> bool {
    true
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainingConfig {
    pub epochs: usize,
    pub batch_size: usize,
    pub repetitions: usize,
    pub base_seed: u64,
    pub selection_metric: SelectionMetric,
    pub validation_fraction: f64,
    pub max_neurons: usize,
    /// Run repetitions concurrently.
    pub parallel: bool,
}

impl Default for TrainingConfig {
    fn default() -> Self {
        Self {
            epochs: 30,
            batch_size: 1000,
            repetitions: 5,
            base_seed: 0,
            selection_metric: SelectionMetric::F1,
            validation_fraction: 0.2,
            max_neurons: DEFAULT_MAX_NEURONS,
            parallel: true,
        }
    }
}

/// The `[architecture]` table: a preset name plus optional overrides.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ArchitectureOverrides {
    pub kind: Option<ArchitectureKind>,
    pub hidden_units: Option<usize>,
    pub binomial_neurons: Option<usize>,
    pub ensemble_outputs: Option<usize>,
    pub hidden_activation: Option<Activation>,
    pub loss: Option<LossKind>,
    pub aggregation: Option<Aggregation>,
    pub mask_rate: Option<f64>,
    pub mask_seed: Option<u64>,
}

impl ArchitectureOverrides {
    pub fn resolve(&self) -> Result<ArchitectureSpec> {
        let kind = self
            .kind
            .ok_or_else(|| Error::Config("[architecture] needs a `kind`".into()))?;
        let mut spec = ArchitectureSpec::preset(kind);
        if let Some(v) = self.hidden_units {
            spec.hidden_units = v;
        }
        if let Some(v) = self.binomial_neurons {
            spec.binomial_neurons = v;
        }
        if let Some(v) = self.ensemble_outputs {
            spec.ensemble_outputs = v;
        }
        if let Some(v) = self.hidden_activation {
            spec.hidden_activation = v;
        }
        if let Some(v) = self.loss {
            spec.loss.loss = v;
        }
        if let Some(v) = self.aggregation {
            spec.loss.aggregation = v;
        }
        if let Some(v) = self.mask_rate {
            spec.loss.mask_rate = v;
        }
        if let Some(v) = self.mask_seed {
            spec.loss.seed = v;
        }
        spec.validate()?;
        Ok(spec)
    }
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RawConfig {
    dataset: DatasetConfig,
    architecture: ArchitectureOverrides,
    #[serde(default)]
    optimizer: AdamConfig,
    #[serde(default)]
    training: TrainingConfig,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ExperimentConfig {
    pub dataset: DatasetConfig,
    pub architecture: ArchitectureSpec,
    pub optimizer: AdamConfig,
    pub training: TrainingConfig,
}

impl ExperimentConfig {
    pub fn new(manifest: impl Into<PathBuf>, kind: ArchitectureKind) -> Self {
        Self {
            dataset: DatasetConfig {
                manifest: manifest.into(),
                normalize: true,
            },
            architecture: ArchitectureSpec::preset(kind),
            optimizer: AdamConfig::default(),
            training: TrainingConfig::default(),
        }
    }

    /// Parses a TOML config. A relative manifest path is joined onto `base_dir`.
    pub fn from_toml_str(text: &str, base_dir: Option<&Path>) -> Result<Self> {
        let raw: RawConfig = toml::from_str(text)?;
        let mut dataset = raw.dataset;
        if let Some(dir) = base_dir {
            if dataset.manifest.is_relative() {
                dataset.manifest = dir.join(&dataset.manifest);
            }
        }
        let cfg = Self {
            dataset,
            architecture: raw.architecture.resolve()?,
            optimizer: raw.optimizer,
            training: raw.training,
        };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = fs::read_to_string(path)
            .map_err(|e| Error::Config(format!("cannot read {}: {e}", path.display())))?;
        Self::from_toml_str(&text, path.parent())
    }

    /// Replaces the architecture with the preset for `kind`.
    pub fn with_architecture(mut self, kind: ArchitectureKind) -> Self {
        self.architecture = ArchitectureSpec::preset(kind);
        self
    }

    pub fn validate(&self) -> Result<()> {
        let t = &self.training;
        if t.repetitions == 0 {
            return Err(Error::Config("repetitions must be at least 1".into()));
        }
        if t.epochs == 0 {
            return Err(Error::Config("epochs must be at least 1".into()));
        }
        if t.batch_size < 2 {
            return Err(Error::Config("batch_size must be at least 2".into()));
        }
        if !(t.validation_fraction > 0.0 && t.validation_fraction < 1.0) {
            return Err(Error::Config("validation_fraction must be in (0, 1)".into()));
        }
        self.architecture.validate()?;
        self.optimizer.validate()
    }
}
