use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{BlockConfig, HeadKind, LossMode, ModelConfig, TrainConfig};
use crate::numerics::Activation;
use crate::preprocess::{DEFAULT_Q_HIGH, DEFAULT_Q_LOW, DEFAULT_SIGMA, DEFAULT_VARIANCE_THRESHOLD, DEFAULT_WINDOW};
use crate::spatial::{WeightScheme, DEFAULT_PERMUTATIONS};
use crate::synth::{SynthSpec, COORDS_FILE, OUTAGES_FILE, WEATHER_FILE};

pub const CONFIG_SCHEMA_VERSION: u32 = 1;

/// Input files. Relative paths resolve against the workdir.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PathsConfig {
    pub workdir: PathBuf,
    pub outage_csv: PathBuf,
    pub weather_csv: PathBuf,
    pub coords_csv: PathBuf,
}

impl Default for PathsConfig {
    fn default() -> Self {
        Self {
            workdir: PathBuf::from("."),
            outage_csv: PathBuf::from(OUTAGES_FILE),
            weather_csv: PathBuf::from(WEATHER_FILE),
            coords_csv: PathBuf::from(COORDS_FILE),
        }
    }
}

impl PathsConfig {
    pub fn resolve(&self, p: &Path) -> PathBuf {
        if p.is_absolute() {
            p.to_path_buf()
        } else {
            self.workdir.join(p)
        }
    }

    pub fn output(&self, name: &str) -> PathBuf {
        self.workdir.join(name)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PreprocessConfig {
    pub q_low: f64,
    pub q_high: f64,
    pub denoise_window: usize,
    pub denoise_sigma: f64,
    pub n_in: usize,
    pub n_out: usize,
    pub test_fraction: f64,
    pub pca_threshold: f64,
}

impl Default for PreprocessConfig {
    fn default() -> Self {
        Self {
            q_low: DEFAULT_Q_LOW,
            q_high: DEFAULT_Q_HIGH,
            denoise_window: DEFAULT_WINDOW,
            denoise_sigma: DEFAULT_SIGMA,
            n_in: 7,
            n_out: 1,
            test_fraction: 0.2,
            pca_threshold: DEFAULT_VARIANCE_THRESHOLD,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ModelKnobs {
    pub block1: BlockConfig,
    pub block2: BlockConfig,
    pub dense_size: usize,
    pub head: HeadKind,
    pub dropout: [f64; 2],
}

impl Default for ModelKnobs {
    fn default() -> Self {
        let d = ModelConfig::dual_block(1, 1, 1);
        Self {
            block1: d.block1,
            block2: d.block2,
            dense_size: d.dense_size,
            head: d.head,
            dropout: d.dropout,
        }
    }
}

impl ModelKnobs {
    pub fn model_config(&self, input_size: usize, n_in: usize, n_out: usize) -> ModelConfig {
        ModelConfig {
            input_size,
            n_in,
            n_out,
            block1: self.block1,
            block2: self.block2,
            dense_size: self.dense_size,
            head: self.head,
            dropout: self.dropout,
        }
    }

    /// Smaller blocks with the same activations.
    pub fn compact(hidden1: usize, hidden2: usize, dense: usize) -> Self {
        Self {
            block1: BlockConfig {
                hidden: hidden1,
                candidate_activation: Activation::Relu,
                output_activation: Activation::Relu,
            },
            block2: BlockConfig {
                hidden: hidden2,
                candidate_activation: Activation::Tanh,
                output_activation: Activation::Tanh,
            },
            dense_size: dense,
            ..Self::default()
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct MoranConfig {
    pub scheme: WeightScheme,
    pub row_standardize: bool,
    pub permutations: usize,
}

impl Default for MoranConfig {
    fn default() -> Self {
        Self {
            scheme: WeightScheme::Knn { k: 4 },
            row_standardize: true,
            permutations: DEFAULT_PERMUTATIONS,
        }
    }
}

/// The whole run as one JSON document. `seed` drives synthesis, weight
/// initialization, shuffling, dropout and permutation tests.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PipelineConfig {
    pub schema_version: u32,
    pub seed: u64,
    pub paths: PathsConfig,
    pub synth: SynthSpec,
    pub preprocess: PreprocessConfig,
    pub model: ModelKnobs,
    pub train: TrainConfig,
    pub moran: MoranConfig,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        Self {
            schema_version: CONFIG_SCHEMA_VERSION,
            seed: 42,
            paths: PathsConfig::default(),
            synth: SynthSpec::default(),
            preprocess: PreprocessConfig::default(),
            model: ModelKnobs::default(),
            train: TrainConfig::default(),
            moran: MoranConfig::default(),
        }
    }
}

impl PipelineConfig {
    pub fn from_json(text: &str) -> Result<Self> {
        let cfg: PipelineConfig = serde_json::from_str(text)?;
        if cfg.schema_version != CONFIG_SCHEMA_VERSION {
            return Err(Error::Format(format!(
                "config schema_version {} unsupported (expected {CONFIG_SCHEMA_VERSION})",
                cfg.schema_version
            )));
        }
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_json(&std::fs::read_to_string(path)?)
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn train_config(&self) -> TrainConfig {
        TrainConfig {
            seed: self.seed,
            ..self.train.clone()
        }
    }

    pub fn synth_spec(&self) -> SynthSpec {
        SynthSpec {
            seed: self.seed,
            ..self.synth.clone()
        }
    }

    pub fn with_loss_mode(mut self, mode: LossMode) -> Self {
        self.train.loss_mode = mode;
        self
    }
}
