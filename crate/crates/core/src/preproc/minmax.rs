use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Min-max statistics in dB, either one scalar pair or one pair per bin.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "mode", rename_all = "snake_case")]
pub enum MinMax {
    Global { min_db: f64, max_db: f64 },
    PerBin { min_db: Vec<f64>, max_db: Vec<f64> },
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MinMaxMode {
    #[default]
    Global,
    PerBin,
}

/// Result of normalizing one vector.
#[derive(Debug, Clone, PartialEq)]
pub struct Normalized {
    pub values: Vec<f64>,
    /// Set when any input fell outside the fitted range and was clamped.
    pub clamped: bool,
}

impl MinMax {
    #[inline]
    pub fn bounds(&self, bin: usize) -> (f64, f64) {
        match self {
            MinMax::Global { min_db, max_db } => (*min_db, *max_db),
            MinMax::PerBin { min_db, max_db } => (min_db[bin], max_db[bin]),
        }
    }

    /// `max - min` at a bin; the dB span one normalized unit covers.
    #[inline]
    pub fn span(&self, bin: usize) -> f64 {
        let (lo, hi) = self.bounds(bin);
        hi - lo
    }

    fn check_len(&self, n: usize) -> Result<()> {
        match self {
            MinMax::PerBin { min_db, .. } if min_db.len() != n => Err(Error::InvalidArgument(
                format!("per-bin min-max has {} bins, vector has {n}", min_db.len()),
            )),
            _ => Ok(()),
        }
    }

    /// `(v - min) / (max - min)`, clamped into `[0, 1]`.
    pub fn apply(&self, db: &[f64]) -> Result<Normalized> {
        self.check_len(db.len())?;
        let mut clamped = false;
        let values = db
            .iter()
            .enumerate()
            .map(|(k, &v)| {
                let (lo, hi) = self.bounds(k);
                let x = (v - lo) / (hi - lo);
                if x < 0.0 {
                    clamped = true;
                    0.0
                } else if x > 1.0 {
                    clamped = true;
                    1.0
                } else {
                    x
                }
            })
            .collect();
        Ok(Normalized { values, clamped })
    }

    pub fn inverse(&self, normalized: &[f64]) -> Result<Vec<f64>> {
        self.check_len(normalized.len())?;
        Ok(normalized
            .iter()
            .enumerate()
            .map(|(k, &x)| {
                let (lo, hi) = self.bounds(k);
                x * (hi - lo) + lo
            })
            .collect())
    }
}

/// Fit min-max statistics over every bin of every training HRTF.
pub fn fit_minmax<'a, I>(db_hrtfs: I, mode: MinMaxMode) -> Result<MinMax>
where
    I: IntoIterator<Item = &'a [f64]>,
{
    let mut mins: Vec<f64> = Vec::new();
    let mut maxs: Vec<f64> = Vec::new();
    let mut count = 0usize;
    for h in db_hrtfs {
        if h.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidArgument(
                "non-finite HRTF value in min-max fit".into(),
            ));
        }
        if count == 0 {
            mins = h.to_vec();
            maxs = h.to_vec();
        } else {
            if h.len() != mins.len() {
                return Err(Error::InvalidArgument("HRTFs of differing length".into()));
            }
            for ((lo, hi), &v) in mins.iter_mut().zip(maxs.iter_mut()).zip(h) {
                *lo = lo.min(v);
                *hi = hi.max(v);
            }
        }
        count += 1;
    }
    if count == 0 || mins.is_empty() {
        return Err(Error::InvalidArgument(
            "min-max fit needs at least one HRTF".into(),
        ));
    }
    match mode {
        MinMaxMode::Global => {
            let min_db = mins.iter().copied().fold(f64::INFINITY, f64::min);
            let max_db = maxs.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            if max_db <= min_db {
                return Err(Error::DegenerateRange(min_db));
            }
            Ok(MinMax::Global { min_db, max_db })
        }
        MinMaxMode::PerBin => {
            if let Some((&lo, _)) = mins.iter().zip(&maxs).find(|(lo, hi)| hi <= lo) {
                return Err(Error::DegenerateRange(lo));
            }
            Ok(MinMax::PerBin {
                min_db: mins,
                max_db: maxs,
            })
        }
    }
}
