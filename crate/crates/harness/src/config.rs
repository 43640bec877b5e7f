//! Run configuration, read from JSON.

use std::path::Path;

use serde::{Deserialize, Serialize};
use spnet_core::loss::LossConfig;
use spnet_core::model::ModelConfig;
use spnet_core::optim::AdamConfig;
use spnet_core::tensor::precision::Precision;

use crate::{HarnessError, Result};

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AugmentConfig {
    pub hflip: bool,
    pub rotate: bool,
    pub border_clip: bool,
}

impl AugmentConfig {
    pub fn any(&self) -> bool {
        self.hflip || self.rotate || self.border_clip
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub model: ModelConfig,
    pub loss: LossConfig,
    pub optimizer: AdamConfig,
    pub epochs: usize,
    pub batch_size: usize,
    pub augment: AugmentConfig,
    pub seed: u64,
    /// Arithmetic precision of training and inference.
    pub precision: Precision,
    /// Number of generated triples when no data directory is given.
    pub synthetic_samples: usize,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            model: ModelConfig::default(),
            loss: LossConfig::default(),
            optimizer: AdamConfig::default(),
            epochs: 200,
            batch_size: 4,
            augment: AugmentConfig::default(),
            seed: 0,
            precision: Precision::F64,
            synthetic_samples: 5,
        }
    }
}

impl RunConfig {
    pub fn validate(&self) -> Result<()> {
        self.model.validate()?;
        self.loss.validate().map_err(HarnessError::Validation)?;
        self.optimizer.validate().map_err(HarnessError::Validation)?;
        if self.epochs == 0 {
            return Err(HarnessError::validation("epochs must be >= 1"));
        }
        if self.batch_size == 0 {
            return Err(HarnessError::validation("batch_size must be >= 1"));
        }
        Ok(())
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let cfg: RunConfig =
            serde_json::from_str(text).map_err(|e| HarnessError::validation(format!("run config: {e}")))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| HarnessError::io(path, e))?;
        Self::from_json(&text)
    }

    /// Uses `seed` for both data/augmentation randomness and initialization.
    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = seed;
        self.model.seed = seed;
        self
    }
}
