use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::alignment::LatentConfig;
use crate::error::{Error, Result};
use crate::models::{GumbelConfig, ModelConfig};
use crate::numcore::AdamConfig;

/// Training settings for every stage. Loaded from TOML; unknown keys are rejected.
///
/// ```toml
/// learning_rate = 5e-5
/// pretrain_epochs = 1
/// finetune_epochs = 3
/// batch_size = 8
/// kd_temperature = 20.0
/// beta = 1.0
/// rec_weight = 1.0
/// seed = 0
///
/// [latent]
/// mode = "latent"   # latent | persona | intent
/// k = 8
///
/// [gumbel]
/// temperature = 1.0
/// hard = true
///
/// [model.encoder]
/// dim = 32
/// depth = 1
/// ```
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    pub latent: LatentConfig,
    pub learning_rate: f64,
    /// Epochs for stages 1 and 2.
    pub pretrain_epochs: usize,
    /// Epochs for stages 3 and 4.
    pub finetune_epochs: usize,
    pub batch_size: usize,
    pub kd_temperature: f64,
    /// Weight of the hard-label term of the distillation loss.
    pub beta: f64,
    /// Weight of the alignment loss in the teacher objective.
    pub rec_weight: f64,
    pub gumbel: GumbelConfig,
    pub seed: u64,
    pub model: ModelConfig,
    /// Multiply the soft distillation term by `T²`.
    pub kd_t2_scaling: bool,
    /// Average the teacher's soft targets over all `K` latent values,
    /// weighted by the posterior, instead of drawing one `z`.
    pub kd_marginalize: bool,
    pub min_token_freq: usize,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            latent: LatentConfig::default(),
            learning_rate: 5e-5,
            pretrain_epochs: 1,
            finetune_epochs: 3,
            batch_size: 8,
            kd_temperature: 20.0,
            beta: 1.0,
            rec_weight: 1.0,
            gumbel: GumbelConfig::default(),
            seed: 0,
            model: ModelConfig::default(),
            kd_t2_scaling: false,
            kd_marginalize: false,
            min_token_freq: 1,
        }
    }
}

impl TrainConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        let cfg: Self = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_toml(&std::fs::read_to_string(path)?)
    }

    pub fn validate(&self) -> Result<()> {
        let positive = [
            ("learning_rate", self.learning_rate),
            ("kd_temperature", self.kd_temperature),
            ("gumbel.temperature", self.gumbel.temperature),
        ];
        for (name, v) in positive {
            if !(v > 0.0 && v.is_finite()) {
                return Err(Error::Config(format!("{name} must be positive, got {v}")));
            }
        }
        for (name, v) in [("beta", self.beta), ("rec_weight", self.rec_weight)] {
            if !(v >= 0.0 && v.is_finite()) {
                return Err(Error::Config(format!("{name} must be non-negative, got {v}")));
            }
        }
        if self.batch_size == 0 || self.pretrain_epochs == 0 || self.finetune_epochs == 0 || self.min_token_freq == 0 {
            return Err(Error::Config(
                "batch size, epochs and min_token_freq must be positive".into(),
            ));
        }
        self.latent.validate()
    }

    pub fn adam(&self) -> AdamConfig {
        AdamConfig {
            learning_rate: self.learning_rate,
            ..AdamConfig::default()
        }
    }
}
