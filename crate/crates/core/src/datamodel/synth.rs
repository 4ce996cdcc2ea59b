//! Synthetic spherical-head dataset generator.
//!
//! Each subject gets 27 anthropometric values drawn from the distributions in
//! `config/synth_anthro_v1.json`. Its left-ear magnitude response for a
//! direction is built analytically in dB:
//!
//! * a broadband gain that depends on the angle of incidence to the left ear,
//!   with a shadow dip across the contralateral side and a low-frequency
//!   bright-spot bump around the contralateral pole;
//! * a single-pole/single-zero head-shadow shelf (spherical-head model) whose
//!   corner depends on the head radius and whose high-frequency gain depends
//!   on the angle of incidence;
//! * a concha resonance, an elevation-dependent pinna notch, a shoulder
//!   reflection ripple and a pinna-flare high shelf, all scaled by the
//!   subject's anthropometry;
//! * a small subject-specific spectral ripple that is not explained by the
//!   anthropometry.
//!
//! The magnitude is turned into a 200-sample minimum-phase HRIR through the
//! real cepstrum.

use std::f64::consts::PI;
use std::sync::{Arc, OnceLock};

use ndarray::Array2;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use rustfft::num_complex::Complex;
use rustfft::{Fft, FftPlanner};
use serde::Deserialize;

use super::{build_cipic_grid, Dataset, Direction, Subject, HRIR_LEN, N_ANTHRO, SAMPLE_RATE_HZ};
use crate::error::{Error, Result};

const ANTHRO_CONFIG: &str = include_str!("../../config/synth_anthro_v1.json");

const SPEED_OF_SOUND: f64 = 343.0;
const SYNTH_FFT_LEN: usize = 2048;
const OUTPUT_GAIN: f64 = 0.2;
/// Samples at the end of each HRIR tapered with a half-Hann window.
const TAPER_LEN: usize = 24;

// Broadband direction gain (dB) as a function of the incidence angle α to the left ear.
const NEAR_EAR_BOOST_DB: f64 = 2.0;
const SHADOW_DEPTH_DB: f64 = 16.0;
const SHADOW_CENTER_DEG: f64 = 92.5;
const SHADOW_WIDTH_DEG: f64 = 1.0;
const BRIGHT_SPOT_DB: f64 = 24.0;
const BRIGHT_SPOT_WIDTH_DEG: f64 = 45.0;
const REFERENCE_HEAD_RADIUS_M: f64 = 0.0875;

#[derive(Debug, Clone, Deserialize)]
pub struct AnthroDistribution {
    pub name: String,
    pub mean: f64,
    pub std: f64,
}

#[derive(Debug, Clone, Deserialize)]
pub struct SynthConfig {
    pub version: u32,
    pub parameters: Vec<AnthroDistribution>,
}

impl SynthConfig {
    /// The distributions shipped with the crate.
    pub fn builtin() -> SynthConfig {
        let cfg: SynthConfig =
            serde_json::from_str(ANTHRO_CONFIG).expect("bundled synth config parses");
        assert_eq!(cfg.parameters.len(), N_ANTHRO);
        cfg
    }
}

// Indices into the 27-parameter vector.
const X1_HEAD_WIDTH: usize = 0;
const X2_HEAD_HEIGHT: usize = 1;
const X3_HEAD_DEPTH: usize = 2;
const X7_NECK_HEIGHT: usize = 6;
const D1_CONCHA_HEIGHT: usize = 17;
const D5_PINNA_HEIGHT: usize = 21;
const D6_PINNA_WIDTH: usize = 22;
const D8_CONCHA_DEPTH: usize = 24;
const T2_PINNA_FLARE: usize = 26;

/// Per-subject acoustic parameters derived from anthropometry.
#[derive(Debug, Clone, PartialEq)]
pub struct HeadModel {
    pub head_radius_m: f64,
    pub concha_freq_hz: f64,
    pub concha_gain_db: f64,
    pub notch_base_hz: f64,
    pub notch_depth_db: f64,
    pub shoulder_delay_s: f64,
    pub flare_gain_db: f64,
    /// (amplitude dB, cycles per octave, phase) of the idiosyncratic ripple.
    pub ripple: [(f64, f64, f64); 3],
}

impl HeadModel {
    pub fn from_anthro(anthro: &[f64], ripple: [(f64, f64, f64); 3]) -> HeadModel {
        // Spherical-head radius fit from head width/height/depth (cm).
        let radius_cm = 0.51 * anthro[X1_HEAD_WIDTH] / 2.0
            + 0.019 * anthro[X2_HEAD_HEIGHT] / 2.0
            + 0.18 * anthro[X3_HEAD_DEPTH] / 2.0
            + 3.2;
        let head_radius_m = (radius_cm / 100.0).clamp(0.06, 0.12);
        HeadModel {
            head_radius_m,
            concha_freq_hz: 4500.0 * 1.91 / anthro[D1_CONCHA_HEIGHT].max(0.8),
            concha_gain_db: (6.0 * anthro[D8_CONCHA_DEPTH] / 1.13).clamp(2.0, 12.0),
            notch_base_hz: 6500.0 * 6.41 / anthro[D5_PINNA_HEIGHT].max(3.0),
            notch_depth_db: (14.0 * anthro[D6_PINNA_WIDTH] / 2.92).clamp(5.0, 25.0),
            shoulder_delay_s: 2.0 * (anthro[X7_NECK_HEIGHT].max(1.0) / 100.0 + head_radius_m)
                / SPEED_OF_SOUND,
            flare_gain_db: (3.0 * anthro[T2_PINNA_FLARE] / 28.53).clamp(0.0, 8.0),
            ripple,
        }
    }

    /// Angle of incidence to the left ear (at −y) in degrees: 90° + azimuth.
    pub fn incidence_deg(azimuth_deg: f64) -> f64 {
        90.0 + azimuth_deg
    }

    /// Broadband gain in dB for incidence angle α.
    pub fn broadband_gain_db(&self, alpha_deg: f64) -> f64 {
        let shadow = 1.0 / (1.0 + (-(alpha_deg - SHADOW_CENTER_DEG) / SHADOW_WIDTH_DEG).exp());
        let width = BRIGHT_SPOT_WIDTH_DEG * self.head_radius_m / REFERENCE_HEAD_RADIUS_M;
        let bright = (-((180.0 - alpha_deg) / width).powi(2)).exp();
        NEAR_EAR_BOOST_DB * alpha_deg.to_radians().cos() - SHADOW_DEPTH_DB * shadow
            + BRIGHT_SPOT_DB * bright
    }

    /// Single-pole/single-zero spherical-head shadow shelf, in dB.
    pub fn head_shadow_db(&self, freq_hz: f64, alpha_deg: f64) -> f64 {
        let corner = SPEED_OF_SOUND / (PI * self.head_radius_m);
        let hf_gain = 1.05 + 0.95 * (alpha_deg / 150.0 * 180.0).to_radians().cos();
        let r = freq_hz / corner;
        10.0 * ((1.0 + (hf_gain * r).powi(2)) / (1.0 + r * r)).log10()
    }

    /// Left-ear magnitude response in dB.
    pub fn magnitude_db(&self, freq_hz: f64, azimuth_deg: f64, elevation_deg: f64) -> f64 {
        let f = freq_hz.max(20.0);
        let alpha = Self::incidence_deg(azimuth_deg);
        let near = 0.5 + 0.5 * alpha.to_radians().cos();
        let el = elevation_deg.to_radians();
        let octaves = |center: f64| (f / center).log2();

        let concha = self.concha_gain_db
            * (0.4 + 0.6 * near)
            * (-0.5 * (octaves(self.concha_freq_hz) / 0.35).powi(2)).exp();

        let notch_freq = self.notch_base_hz * 2f64.powf(0.9 * (elevation_deg + 45.0) / 180.0);
        let front = 0.6 + 0.4 * (elevation_deg - 20.0).to_radians().cos();
        let notch = -self.notch_depth_db
            * (0.3 + 0.7 * near)
            * front
            * (-0.5 * (octaves(notch_freq) / 0.12).powi(2)).exp();

        let shoulder_delay = self.shoulder_delay_s * (0.6 + 0.4 * el.sin());
        let shoulder = 1.2
            * (0.5 + 0.5 * el.sin())
            * (2.0 * PI * f * shoulder_delay).cos()
            * (-f / 2500.0).exp();

        let flare = self.flare_gain_db * near * f * f / (f * f + 3000.0 * 3000.0);

        let ripple: f64 = self
            .ripple
            .iter()
            .map(|&(amp, cpo, phase)| amp * (2.0 * PI * cpo * octaves(1000.0) + phase).cos())
            .sum();

        self.broadband_gain_db(alpha)
            + self.head_shadow_db(f, alpha)
            + concha
            + notch
            + shoulder
            + flare
            + ripple
    }
}

/// Frequency of bin `k` of an `n`-point DFT at the CIPIC sample rate.
fn bin_freq(k: usize, n: usize) -> f64 {
    k as f64 * SAMPLE_RATE_HZ as f64 / n as f64
}

struct MinPhase {
    forward: Arc<dyn Fft<f64>>,
    inverse: Arc<dyn Fft<f64>>,
}

impl MinPhase {
    fn new() -> Self {
        let mut planner = FftPlanner::new();
        MinPhase {
            forward: planner.plan_fft_forward(SYNTH_FFT_LEN),
            inverse: planner.plan_fft_inverse(SYNTH_FFT_LEN),
        }
    }

    /// Minimum-phase impulse response from a one-sided dB magnitude
    /// (`SYNTH_FFT_LEN / 2 + 1` bins), truncated to `HRIR_LEN` samples.
    fn impulse(&self, magnitude_db: &[f64]) -> Vec<f64> {
        let n = SYNTH_FFT_LEN;
        let half = n / 2;
        debug_assert_eq!(magnitude_db.len(), half + 1);
        let ln10_20 = std::f64::consts::LN_10 / 20.0;
        let mut buf: Vec<Complex<f64>> = (0..n)
            .map(|k| {
                let kk = if k <= half { k } else { n - k };
                Complex::new(magnitude_db[kk] * ln10_20, 0.0)
            })
            .collect();
        // real cepstrum
        self.inverse.process(&mut buf);
        let scale = 1.0 / n as f64;
        for (i, c) in buf.iter_mut().enumerate() {
            let fold = match i {
                0 => 1.0,
                i if i < half => 2.0,
                i if i == half => 1.0,
                _ => 0.0,
            };
            *c = Complex::new(c.re * scale * fold, 0.0);
        }
        self.forward.process(&mut buf);
        for c in buf.iter_mut() {
            *c = c.exp();
        }
        self.inverse.process(&mut buf);
        let mut h: Vec<f64> = buf.iter().take(HRIR_LEN).map(|c| c.re * scale).collect();
        for i in 0..TAPER_LEN {
            let w = 0.5 * (1.0 + (PI * (i + 1) as f64 / (TAPER_LEN + 1) as f64).cos());
            h[HRIR_LEN - TAPER_LEN + i] *= w;
        }
        h
    }
}

fn min_phase() -> &'static MinPhase {
    static PLAN: OnceLock<MinPhase> = OnceLock::new();
    PLAN.get_or_init(MinPhase::new)
}

/// Synthesize all HRIRs of one subject on the given directions.
pub fn synthesize_hrirs(model: &HeadModel, directions: &[Direction]) -> Array2<f64> {
    let plan = min_phase();
    let freqs: Vec<f64> = (0..=SYNTH_FFT_LEN / 2)
        .map(|k| bin_freq(k, SYNTH_FFT_LEN))
        .collect();
    let mut out = Array2::zeros((directions.len(), HRIR_LEN));
    let mut mag = vec![0.0; freqs.len()];
    for (row, d) in directions.iter().enumerate() {
        for (m, &f) in mag.iter_mut().zip(&freqs) {
            *m = model.magnitude_db(f, d.azimuth_deg, d.elevation_deg);
        }
        let h = plan.impulse(&mag);
        for (dst, v) in out.row_mut(row).iter_mut().zip(h) {
            *dst = v * OUTPUT_GAIN;
        }
    }
    let peak = out.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    if peak > 1.0 {
        out.mapv_inplace(|v| v / peak);
    }
    out
}

pub fn subject_id(index: usize) -> String {
    format!("synth_{index:03}")
}

fn draw_subject(cfg: &SynthConfig, seed: u64, index: usize) -> (Vec<f64>, HeadModel) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(index as u64);
    let anthro: Vec<f64> = cfg
        .parameters
        .iter()
        .map(|p| {
            Normal::new(p.mean, p.std)
                .expect("config std is positive")
                .sample(&mut rng)
        })
        .collect();
    let mut ripple = [(0.0, 0.0, 0.0); 3];
    for r in ripple.iter_mut() {
        *r = (
            rng.random_range(0.2..0.6),
            rng.random_range(0.4..1.6),
            rng.random_range(0.0..2.0 * PI),
        );
    }
    let model = HeadModel::from_anthro(&anthro, ripple);
    (anthro, model)
}

/// Head models of the subjects `generate_synthetic_dataset(n, seed)` produces.
pub fn synthetic_head_models(n_subjects: usize, seed: u64) -> Vec<HeadModel> {
    let cfg = SynthConfig::builtin();
    (0..n_subjects)
        .map(|i| draw_subject(&cfg, seed, i).1)
        .collect()
}

/// Deterministic synthetic dataset on the CIPIC grid.
pub fn generate_synthetic_dataset(n_subjects: usize, seed: u64) -> Result<Dataset> {
    generate_with_config(&SynthConfig::builtin(), n_subjects, seed)
}

pub fn generate_with_config(cfg: &SynthConfig, n_subjects: usize, seed: u64) -> Result<Dataset> {
    if n_subjects < 1 {
        return Err(Error::InvalidArgument(
            "n_subjects must be at least 1".into(),
        ));
    }
    if cfg.parameters.len() != N_ANTHRO {
        return Err(Error::Config(format!(
            "synth config lists {} parameters, expected {N_ANTHRO}",
            cfg.parameters.len()
        )));
    }
    if let Some(p) = cfg
        .parameters
        .iter()
        .find(|p| !(p.std > 0.0 && p.mean.is_finite()))
    {
        return Err(Error::Config(format!("bad distribution for {}", p.name)));
    }
    let grid = build_cipic_grid();
    let subjects = (0..n_subjects)
        .map(|i| {
            let (anthro_raw, model) = draw_subject(cfg, seed, i);
            Subject {
                id: subject_id(i),
                anthro_raw,
                hrirs: synthesize_hrirs(&model, &grid.directions),
            }
        })
        .collect();
    Dataset::new(subjects, grid)
}
