//! Deterministic transforms from raw measurements to model-ready vectors.

mod anthro;
mod minmax;
mod spectrum;

pub use anthro::{fit_anthro_stats, normalize_anthro, AnthroProfile, AnthroStats, StdConvention};
pub use minmax::{fit_minmax, MinMax, MinMaxMode, Normalized};
pub use spectrum::{
    hrir_to_hrtf_db, FrequencyAxis, SpectrumAnalyzer, SpectrumConfig, DFT_SIZE, F_HI_HZ, F_LO_HZ,
    N_BINS, Q_FACTOR,
};

use ndarray::Array2;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::datamodel::{Dataset, Direction, N_ANTHRO};
use crate::error::{Error, Result};

/// Width of the network input: 27 anthropometric values then x, y, z.
pub const MODEL_INPUT_DIM: usize = N_ANTHRO + 3;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum HrtfScale {
    Db,
    Normalized,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Hrtf {
    pub bins: Vec<f64>,
    pub scale: HrtfScale,
    pub direction_index: usize,
    pub subject_id: String,
}

impl Hrtf {
    pub fn validate(&self) -> Result<()> {
        if self.bins.len() != N_BINS {
            return Err(Error::InvalidArgument(format!(
                "HRTF has {} bins, expected {N_BINS}",
                self.bins.len()
            )));
        }
        if self.bins.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidArgument("HRTF has non-finite bins".into()));
        }
        if self.scale == HrtfScale::Normalized && self.bins.iter().any(|v| !(0.0..=1.0).contains(v))
        {
            return Err(Error::InvalidArgument(
                "normalized HRTF outside [0, 1]".into(),
            ));
        }
        Ok(())
    }
}

/// Concatenate `[27 normalized anthropometrics; x; y; z]`.
pub fn build_model_input(
    profile: &AnthroProfile,
    direction: &Direction,
) -> Result<[f64; MODEL_INPUT_DIM]> {
    if !profile.normalized || profile.values.len() != N_ANTHRO {
        return Err(Error::InvalidArgument(
            "model input needs a normalized 27-value profile".into(),
        ));
    }
    let mut out = [0.0; MODEL_INPUT_DIM];
    out[..N_ANTHRO].copy_from_slice(&profile.values);
    out[N_ANTHRO..].copy_from_slice(&direction.cartesian);
    Ok(out)
}

/// dB HRTFs of every subject, shaped `[subject][direction × bin]`.
pub fn dataset_hrtfs_db(
    dataset: &Dataset,
    analyzer: &SpectrumAnalyzer,
) -> Result<Vec<Array2<f64>>> {
    dataset
        .subjects
        .iter()
        .map(|s| {
            let mut out = Array2::zeros((s.hrirs.nrows(), analyzer.axis().len()));
            for (r, row) in s.hrirs.rows().into_iter().enumerate() {
                let db = analyzer
                    .hrtf_db(row.as_slice().expect("standard layout"))
                    .map_err(|e| match e {
                        Error::DegenerateInput(m) => {
                            Error::DegenerateInput(format!("subject {} direction {r}: {m}", s.id))
                        }
                        other => other,
                    })?;
                out.row_mut(r).assign(&ndarray::ArrayView1::from(&db));
            }
            Ok(out)
        })
        .collect()
}

pub const MANIFEST_VERSION: u32 = 1;

/// Frozen train-time preprocessing statistics.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PreprocManifest {
    pub version: u32,
    pub anthro_stats: AnthroStats,
    pub std_convention: StdConvention,
    pub minmax: MinMax,
    pub axis: FrequencyAxis,
    pub q_factor: f64,
    pub dft_size: usize,
}

impl PreprocManifest {
    pub fn new(
        anthro_stats: AnthroStats,
        std_convention: StdConvention,
        minmax: MinMax,
        spectrum: &SpectrumAnalyzer,
    ) -> Result<Self> {
        if let MinMax::Global { min_db, max_db } = minmax {
            if max_db <= min_db {
                return Err(Error::DegenerateRange(min_db));
            }
        }
        Ok(PreprocManifest {
            version: MANIFEST_VERSION,
            anthro_stats,
            std_convention,
            minmax,
            axis: spectrum.axis().clone(),
            q_factor: spectrum.config().q_factor,
            dft_size: spectrum.config().dft_size,
        })
    }

    /// SHA-256 of the canonical JSON encoding, hex.
    pub fn hash(&self) -> String {
        let json = serde_json::to_string(self).expect("manifest serializes");
        hex::encode(Sha256::digest(json.as_bytes()))
    }

    pub fn normalize_profile(&self, raw: &[f64]) -> Result<AnthroProfile> {
        normalize_anthro(&AnthroProfile::raw(raw.to_vec()), &self.anthro_stats)
    }
}
