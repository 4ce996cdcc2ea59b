use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grouping::{DeConfig, Strategy};
use crate::neuralnet::TrainConfig;
use crate::preproc::{MinMaxMode, StdConvention};

pub const EXPERIMENT_FILE: &str = "experiment.json";

/// Where the HRTF min-max statistics are fitted.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MinMaxScope {
    /// On each group's own training HRTFs.
    #[default]
    PerGroup,
    /// On all training HRTFs of the fold, shared by every group.
    Global,
}

/// Everything a cross-validation run depends on. Missing keys in
/// `experiment.json` take the defaults below.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ExperimentConfig {
    pub strategy: Strategy,
    pub seed: u64,
    pub unseen_fraction: f64,
    pub train: TrainConfig,
    pub de: DeConfig,
    pub minmax_scope: MinMaxScope,
    pub minmax_mode: MinMaxMode,
    pub std_convention: StdConvention,
    /// Held-out subjects to run; all subjects when `None`.
    pub folds: Option<Vec<String>>,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        ExperimentConfig {
            strategy: Strategy::Hybrid,
            seed: 0,
            unseen_fraction: 0.2,
            train: TrainConfig::default(),
            de: DeConfig::default(),
            minmax_scope: MinMaxScope::PerGroup,
            minmax_mode: MinMaxMode::Global,
            std_convention: StdConvention::Population,
            folds: None,
        }
    }
}

impl ExperimentConfig {
    /// Small-budget settings for synthetic runs on a laptop: larger learning
    /// rates and smaller batches than the defaults, and short schedules.
    pub fn desk() -> Self {
        ExperimentConfig {
            train: TrainConfig {
                vae_lr: 1e-3,
                dnn_lr: 1e-3,
                batch_size: 64,
                vae_epochs: 20,
                dnn_epochs: 20,
                patience: 5,
                ..TrainConfig::default()
            },
            ..ExperimentConfig::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.train.validate()?;
        if !(0.0..1.0).contains(&self.unseen_fraction) {
            return Err(Error::Config(format!(
                "unseen_fraction {} outside [0, 1)",
                self.unseen_fraction
            )));
        }
        let (lo, hi) = self.de.band_hz;
        if lo.is_nan() || hi.is_nan() || lo >= hi {
            return Err(Error::Config("DE band must be increasing".into()));
        }
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let cfg: ExperimentConfig = serde_json::from_str(&text)
            .map_err(|e| Error::malformed(path.display().to_string(), e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let mut text = serde_json::to_string_pretty(self)?;
        text.push('\n');
        fs::write(path, text).map_err(|e| Error::io(path, e))
    }
}
