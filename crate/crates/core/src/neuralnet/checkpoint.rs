use std::fs;
use std::path::Path;

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use super::train::TrainConfig;
use crate::error::{Error, Result};

pub const CHECKPOINT_VERSION: u32 = 1;

/// A trained network together with what is needed to use it safely: the
/// hash of the preprocessing manifest it was trained under and its config.
/// Stored as JSON with round-trip float formatting, so loading is bit-exact.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Checkpoint<M> {
    pub version: u32,
    pub manifest_hash: String,
    pub training: TrainConfig,
    pub model: M,
}

impl<M: Serialize + DeserializeOwned> Checkpoint<M> {
    pub fn new(model: M, manifest_hash: impl Into<String>, training: TrainConfig) -> Self {
        Checkpoint {
            version: CHECKPOINT_VERSION,
            manifest_hash: manifest_hash.into(),
            training,
            model,
        }
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let json = serde_json::to_string(self)?;
        fs::write(path, json).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let ck: Self = serde_json::from_str(&text)
            .map_err(|e| Error::malformed(path.display().to_string(), e.to_string()))?;
        if ck.version != CHECKPOINT_VERSION {
            return Err(Error::malformed(
                path.display().to_string(),
                format!("unsupported checkpoint version {}", ck.version),
            ));
        }
        Ok(ck)
    }

    /// Load and require a specific manifest hash.
    pub fn load_for(path: &Path, manifest_hash: &str) -> Result<Self> {
        let ck = Self::load(path)?;
        if ck.manifest_hash != manifest_hash {
            return Err(Error::Config(format!(
                "{} was trained under manifest {} but {} is in use",
                path.display(),
                ck.manifest_hash,
                manifest_hash
            )));
        }
        Ok(ck)
    }
}
