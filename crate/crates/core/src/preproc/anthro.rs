use serde::{Deserialize, Serialize};

use crate::datamodel::N_ANTHRO;
use crate::error::{Error, Result};

/// Which standard deviation convention the sigmoid normalization uses.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum StdConvention {
    #[default]
    Population,
    Sample,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AnthroStats {
    pub mean: Vec<f64>,
    pub std: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AnthroProfile {
    pub values: Vec<f64>,
    pub normalized: bool,
}

impl AnthroProfile {
    pub fn raw(values: Vec<f64>) -> Self {
        AnthroProfile {
            values,
            normalized: false,
        }
    }
}

/// Per-parameter mean and standard deviation across subjects.
pub fn fit_anthro_stats(
    profiles: &[AnthroProfile],
    convention: StdConvention,
) -> Result<AnthroStats> {
    if profiles.len() < 2 {
        return Err(Error::InvalidArgument(format!(
            "need at least 2 profiles to fit statistics, got {}",
            profiles.len()
        )));
    }
    if let Some(p) = profiles
        .iter()
        .find(|p| p.normalized || p.values.len() != N_ANTHRO)
    {
        return Err(Error::InvalidArgument(format!(
            "profiles must be raw with {N_ANTHRO} values (got normalized={}, len={})",
            p.normalized,
            p.values.len()
        )));
    }
    let n = profiles.len() as f64;
    let denom = match convention {
        StdConvention::Population => n,
        StdConvention::Sample => n - 1.0,
    };
    let mut mean = vec![0.0; N_ANTHRO];
    let mut std = vec![0.0; N_ANTHRO];
    for i in 0..N_ANTHRO {
        let m = profiles.iter().map(|p| p.values[i]).sum::<f64>() / n;
        let ss: f64 = profiles.iter().map(|p| (p.values[i] - m).powi(2)).sum();
        let s = (ss / denom).sqrt();
        if s.is_nan() || s <= 0.0 {
            return Err(Error::DegenerateParameter { index: i });
        }
        mean[i] = m;
        std[i] = s;
    }
    Ok(AnthroStats { mean, std })
}

/// Logistic normalization `1 / (1 + exp(-(f - μ) / σ))`, per parameter.
pub fn normalize_anthro(profile: &AnthroProfile, stats: &AnthroStats) -> Result<AnthroProfile> {
    if profile.normalized {
        return Err(Error::InvalidArgument(
            "profile is already normalized".into(),
        ));
    }
    if profile.values.len() != stats.mean.len() {
        return Err(Error::InvalidArgument(format!(
            "profile has {} values, stats have {}",
            profile.values.len(),
            stats.mean.len()
        )));
    }
    let values = profile
        .values
        .iter()
        .zip(stats.mean.iter().zip(&stats.std))
        .map(|(&f, (&mu, &sigma))| 1.0 / (1.0 + (-(f - mu) / sigma).exp()))
        .collect();
    Ok(AnthroProfile {
        values,
        normalized: true,
    })
}
