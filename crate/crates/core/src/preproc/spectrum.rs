//! HRIR → log-magnitude HRTF on a logarithmic frequency axis.

use std::sync::Arc;

use rustfft::num_complex::Complex;
use rustfft::{Fft, FftPlanner};
use serde::{Deserialize, Serialize};

use crate::datamodel::{HRIR_LEN, SAMPLE_RATE_HZ};
use crate::error::{Error, Result};

pub const N_BINS: usize = 173;
pub const F_LO_HZ: f64 = 200.0;
pub const F_HI_HZ: f64 = 15_000.0;
pub const DFT_SIZE: usize = 512;
pub const Q_FACTOR: f64 = 8.0;

/// Log-spaced analysis frequencies `f_lo * (f_hi / f_lo)^(k / (n - 1))`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FrequencyAxis {
    pub f_lo: f64,
    pub f_hi: f64,
    pub centers_hz: Vec<f64>,
}

impl FrequencyAxis {
    pub fn log_spaced(f_lo: f64, f_hi: f64, n: usize) -> Result<Self> {
        if !(f_lo > 0.0 && f_hi > f_lo && n >= 2) {
            return Err(Error::Config(format!(
                "invalid frequency axis [{f_lo}, {f_hi}] with {n} bins"
            )));
        }
        let ratio = f_hi / f_lo;
        let last = (n - 1) as f64;
        let mut centers_hz: Vec<f64> = (0..n).map(|k| f_lo * ratio.powf(k as f64 / last)).collect();
        // pin the endpoints exactly
        centers_hz[0] = f_lo;
        centers_hz[n - 1] = f_hi;
        Ok(FrequencyAxis {
            f_lo,
            f_hi,
            centers_hz,
        })
    }

    pub fn standard() -> Self {
        Self::log_spaced(F_LO_HZ, F_HI_HZ, N_BINS).expect("standard axis is valid")
    }

    pub fn len(&self) -> usize {
        self.centers_hz.len()
    }

    pub fn is_empty(&self) -> bool {
        self.centers_hz.is_empty()
    }

    /// Indices of bins whose center lies in `[lo, hi]`.
    pub fn bins_in_band(&self, lo: f64, hi: f64) -> Vec<usize> {
        self.centers_hz
            .iter()
            .enumerate()
            .filter(|(_, &f)| f >= lo && f <= hi)
            .map(|(i, _)| i)
            .collect()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SpectrumConfig {
    pub dft_size: usize,
    pub q_factor: f64,
    pub sample_rate_hz: f64,
}

impl Default for SpectrumConfig {
    fn default() -> Self {
        SpectrumConfig {
            dft_size: DFT_SIZE,
            q_factor: Q_FACTOR,
            sample_rate_hz: SAMPLE_RATE_HZ as f64,
        }
    }
}

/// Reusable FFT plan plus the constant-Q and resampling tables.
#[derive(Clone)]
pub struct SpectrumAnalyzer {
    config: SpectrumConfig,
    axis: FrequencyAxis,
    fft: Arc<dyn Fft<f64>>,
    /// For each linear bin 1..=N/2, the inclusive range of bins averaged.
    smoothing: Vec<(usize, usize)>,
    /// For each axis center: (lower linear bin, upper linear bin, weight of upper).
    interp: Vec<(usize, usize, f64)>,
}

impl std::fmt::Debug for SpectrumAnalyzer {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("SpectrumAnalyzer")
            .field("config", &self.config)
            .field("bins", &self.axis.len())
            .finish()
    }
}

impl SpectrumAnalyzer {
    pub fn new(config: SpectrumConfig, axis: FrequencyAxis) -> Result<Self> {
        let n = config.dft_size;
        if n < HRIR_LEN || config.q_factor <= 0.0 || config.sample_rate_hz <= 0.0 {
            return Err(Error::Config(format!("invalid spectrum config {config:?}")));
        }
        let half = n / 2;
        let bin_hz = config.sample_rate_hz / n as f64;
        if axis.f_hi > half as f64 * bin_hz || axis.f_lo < bin_hz {
            return Err(Error::Config(format!(
                "axis [{}, {}] Hz outside the resolvable range [{bin_hz}, {}] Hz",
                axis.f_lo,
                axis.f_hi,
                half as f64 * bin_hz
            )));
        }
        let smoothing = (1..=half)
            .map(|k| constant_q_band(k as f64 * bin_hz, bin_hz, half, config.q_factor))
            .collect();
        let interp = axis
            .centers_hz
            .iter()
            .map(|&f| {
                // linear bins 1..=half; x = ln(freq)
                let pos = f / bin_hz;
                let lo = (pos.floor() as usize).clamp(1, half - 1);
                let hi = lo + 1;
                let (x0, x1) = ((lo as f64).ln(), (hi as f64).ln());
                let w = ((pos.ln() - x0) / (x1 - x0)).clamp(0.0, 1.0);
                (lo, hi, w)
            })
            .collect();
        let fft = FftPlanner::new().plan_fft_forward(n);
        Ok(SpectrumAnalyzer {
            config,
            axis,
            fft,
            smoothing,
            interp,
        })
    }

    pub fn standard() -> Self {
        Self::new(SpectrumConfig::default(), FrequencyAxis::standard())
            .expect("standard analyzer is valid")
    }

    pub fn axis(&self) -> &FrequencyAxis {
        &self.axis
    }

    pub fn config(&self) -> &SpectrumConfig {
        &self.config
    }

    /// Power spectrum `|X_k|^2` for bins `0..=N/2` of the zero-padded HRIR.
    pub fn power_spectrum(&self, hrir: &[f64]) -> Vec<f64> {
        let n = self.config.dft_size;
        let mut buf: Vec<Complex<f64>> = hrir
            .iter()
            .map(|&v| Complex::new(v, 0.0))
            .chain(std::iter::repeat(Complex::new(0.0, 0.0)))
            .take(n)
            .collect();
        self.fft.process(&mut buf);
        buf[..=n / 2].iter().map(|c| c.norm_sqr()).collect()
    }

    /// Constant-Q smoothed power for linear bins `1..=N/2` (index 0 ↔ bin 1).
    pub fn smoothed_power(&self, power: &[f64]) -> Vec<f64> {
        self.smoothing
            .iter()
            .map(|&(lo, hi)| power[lo..=hi].iter().sum::<f64>() / (hi - lo + 1) as f64)
            .collect()
    }

    /// The full chain: DFT magnitude, constant-Q smoothing, dB, log-frequency resampling.
    pub fn hrtf_db(&self, hrir: &[f64]) -> Result<Vec<f64>> {
        if hrir.len() != HRIR_LEN {
            return Err(Error::InvalidArgument(format!(
                "HRIR length {} != {HRIR_LEN}",
                hrir.len()
            )));
        }
        if hrir.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidArgument("HRIR has non-finite samples".into()));
        }
        if hrir.iter().all(|&v| v == 0.0) {
            return Err(Error::DegenerateInput("all-zero HRIR".into()));
        }
        let smoothed = self.smoothed_power(&self.power_spectrum(hrir));
        let db: Vec<f64> = smoothed.iter().map(|&p| 10.0 * p.log10()).collect();
        let out: Vec<f64> = self
            .interp
            .iter()
            .map(|&(lo, hi, w)| (1.0 - w) * db[lo - 1] + w * db[hi - 1])
            .collect();
        if out.iter().any(|v| !v.is_finite()) {
            return Err(Error::DegenerateInput(
                "HRIR spectrum has zero energy in part of the analysis band".into(),
            ));
        }
        Ok(out)
    }
}

/// Inclusive range of linear bins whose centers fall in `[f(1 - 1/2Q), f(1 + 1/2Q)]`,
/// falling back to the nearest bin when the band holds none.
fn constant_q_band(center_hz: f64, bin_hz: f64, max_bin: usize, q: f64) -> (usize, usize) {
    let half_width = 1.0 / (2.0 * q);
    let lo_hz = center_hz * (1.0 - half_width);
    let hi_hz = center_hz * (1.0 + half_width);
    let tol = 1e-9;
    let lo = ((lo_hz / bin_hz - tol).ceil().max(0.0)) as usize;
    let hi = ((hi_hz / bin_hz + tol).floor() as usize).min(max_bin);
    if lo <= hi {
        (lo, hi)
    } else {
        let nearest = ((center_hz / bin_hz).round() as usize).min(max_bin);
        (nearest, nearest)
    }
}

/// One-shot convenience wrapper around [`SpectrumAnalyzer::hrtf_db`].
pub fn hrir_to_hrtf_db(hrir: &[f64], config: &SpectrumConfig) -> Result<Vec<f64>> {
    SpectrumAnalyzer::new(config.clone(), FrequencyAxis::standard())?.hrtf_db(hrir)
}
