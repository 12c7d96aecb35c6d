//! Run configuration: one TOML document covering model initialization,
//! training, inference, and pooling. Unknown keys are rejected and numeric
//! ranges are validated at load time; every run writes back its effective
//! config, which reloads to an equal value.

use serde::{Deserialize, Serialize};
use std::path::{Path, PathBuf};
use thiserror::Error;

use crate::inference::InferenceConfig;
use crate::learning::{LearningRates, RandomInit, TrainConfig};
use crate::pipeline::PoolingConfig;

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("cannot read config {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("config parse error: {0}")]
    Parse(String),
    #[error("invalid config value: {0}")]
    Invalid(String),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ModelSection {
    /// Number of hidden units for random initialization.
    pub n: Option<usize>,
    pub target_sparsity: f64,
    pub beta_tied: bool,
}

impl Default for ModelSection {
    fn default() -> Self {
        Self {
            n: None,
            target_sparsity: 0.05,
            beta_tied: false,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainSection {
    pub batch_size: usize,
    pub epochs: usize,
    pub seed: u64,
    pub alpha_beta_floor: f64,
    pub rates: LearningRates,
}

impl Default for TrainSection {
    fn default() -> Self {
        let base = TrainConfig::default();
        Self {
            batch_size: base.batch_size,
            epochs: base.epochs,
            seed: base.seed,
            alpha_beta_floor: base.alpha_beta_floor,
            rates: base.rates,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PathsSection {
    pub data: Option<PathBuf>,
    pub out: Option<PathBuf>,
    pub model: Option<PathBuf>,
    pub images: Option<PathBuf>,
    pub whitening: Option<PathBuf>,
}

/// The whole run configuration document.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub model: ModelSection,
    pub train: TrainSection,
    pub inference: InferenceConfig,
    pub pooling: PoolingConfig,
    pub paths: PathsSection,
}

impl RunConfig {
    pub fn load(path: &Path) -> Result<Self, ConfigError> {
        let text = std::fs::read_to_string(path).map_err(|source| ConfigError::Io {
            path: path.display().to_string(),
            source,
        })?;
        let cfg: RunConfig = toml::from_str(&text).map_err(|e| ConfigError::Parse(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn save(&self, path: &Path) -> Result<(), ConfigError> {
        let text = toml::to_string_pretty(self).map_err(|e| ConfigError::Parse(e.to_string()))?;
        std::fs::write(path, text).map_err(|source| ConfigError::Io {
            path: path.display().to_string(),
            source,
        })
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        if !(self.model.target_sparsity > 0.0 && self.model.target_sparsity < 1.0) {
            return Err(ConfigError::Invalid(format!(
                "model.target_sparsity must be in (0, 1), got {}",
                self.model.target_sparsity
            )));
        }
        self.to_train_config()
            .validate()
            .map_err(|e| ConfigError::Invalid(e.to_string()))?;
        self.pooling
            .validate()
            .map_err(|e| ConfigError::Invalid(e.to_string()))?;
        Ok(())
    }

    pub fn to_train_config(&self) -> TrainConfig {
        TrainConfig {
            batch_size: self.train.batch_size,
            epochs: self.train.epochs,
            rates: self.train.rates.clone(),
            inference: self.inference.clone(),
            seed: self.train.seed,
            alpha_beta_floor: self.train.alpha_beta_floor,
        }
    }

    /// Random-init spec from the model section; `None` when `model.n` is
    /// absent (an explicit init model is then required).
    pub fn random_init_spec(&self) -> Option<RandomInit> {
        self.model.n.map(|n| RandomInit {
            n,
            target_sparsity: self.model.target_sparsity,
            beta_tied: self.model.beta_tied,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use tempfile::TempDir;

    #[test]
    fn effective_config_round_trips_to_equal_value() {
        let mut cfg = RunConfig::default();
        cfg.model.n = Some(24);
        cfg.train.epochs = 3;
        cfg.inference.rho = 0.4;
        cfg.inference.elbo_tol = f64::NEG_INFINITY;
        cfg.pooling.grid = 2;
        let dir = TempDir::new().unwrap();
        let path = dir.path().join("run.toml");
        cfg.save(&path).unwrap();
        let loaded = RunConfig::load(&path).unwrap();
        assert_eq!(cfg, loaded);
    }

    #[test]
    fn unknown_keys_are_rejected() {
        let dir = TempDir::new().unwrap();
        let path = dir.path().join("run.toml");
        std::fs::write(&path, "[train]\nbatch_size = 8\nturbo = true\n").unwrap();
        assert!(matches!(RunConfig::load(&path), Err(ConfigError::Parse(_))));
    }

    #[test]
    fn numeric_ranges_are_validated() {
        let dir = TempDir::new().unwrap();
        let path = dir.path().join("run.toml");
        std::fs::write(&path, "[inference]\nrho = 1.5\n").unwrap();
        assert!(matches!(RunConfig::load(&path), Err(ConfigError::Invalid(_))));
        std::fs::write(&path, "[model]\ntarget_sparsity = 0.0\n").unwrap();
        assert!(matches!(RunConfig::load(&path), Err(ConfigError::Invalid(_))));
    }

    #[test]
    fn partial_document_fills_defaults() {
        let dir = TempDir::new().unwrap();
        let path = dir.path().join("run.toml");
        std::fs::write(&path, "[train]\nepochs = 7\n").unwrap();
        let cfg = RunConfig::load(&path).unwrap();
        assert_eq!(cfg.train.epochs, 7);
        assert_eq!(cfg.train.batch_size, TrainSection::default().batch_size);
        assert_eq!(cfg.inference.max_iters, 50);
    }
}
