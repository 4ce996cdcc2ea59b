//! Central finite-difference verification of analytic gradients.
//!
//! Parameters whose ±h perturbation changes the on/off pattern of any ReLU
//! unit sit at (or within h of) a kink, where the loss is not differentiable;
//! they are excluded and counted instead of compared.

use rand::seq::index;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::params::Parameters;
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GradCheckConfig {
    pub h: f64,
    /// Number of parameters to compare (kinks do not count).
    pub samples: usize,
    pub seed: u64,
}

impl Default for GradCheckConfig {
    fn default() -> Self {
        GradCheckConfig {
            h: 1e-5,
            samples: 500,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GradCheckReport {
    pub checked: usize,
    pub excluded_kinks: usize,
    pub max_rel_error: f64,
    pub max_abs_error: f64,
    /// Flat parameter index of the worst comparison.
    pub worst_index: Option<usize>,
    pub worst_analytic: f64,
    pub worst_numeric: f64,
}

impl GradCheckReport {
    pub fn passes(&self, tolerance: f64) -> bool {
        self.checked > 0 && self.max_rel_error < tolerance
    }
}

/// `|a - n| / max(|a|, |n|, 1e-8)`
pub fn relative_error(analytic: f64, numeric: f64) -> f64 {
    (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(1e-8)
}

fn locate(lengths: &[usize], mut flat: usize) -> (usize, usize) {
    for (i, &n) in lengths.iter().enumerate() {
        if flat < n {
            return (i, flat);
        }
        flat -= n;
    }
    unreachable!("flat index within parameter count")
}

/// Compare `analytic` (same layout as `model`) against central differences
/// of `loss`, which returns the loss value and the ReLU activation pattern.
pub fn gradient_check<M, F>(
    model: &M,
    analytic: &M,
    mut loss: F,
    cfg: &GradCheckConfig,
) -> Result<GradCheckReport>
where
    M: Parameters + Clone,
    F: FnMut(&M) -> Result<(f64, Vec<bool>)>,
{
    if !cfg.h.is_finite() || cfg.h <= 0.0 {
        return Err(Error::InvalidArgument(
            "finite-difference step must be positive".into(),
        ));
    }
    let lengths: Vec<usize> = model.param_slices().iter().map(|s| s.len()).collect();
    let total: usize = lengths.iter().sum();
    if analytic
        .param_slices()
        .iter()
        .map(|s| s.len())
        .collect::<Vec<_>>()
        != lengths
    {
        return Err(Error::InvalidArgument(
            "gradient layout differs from model".into(),
        ));
    }
    let analytic_flat = analytic.flat_params();
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let order = index::sample(&mut rng, total, total);
    let mut work = model.clone();
    let mut report = GradCheckReport {
        checked: 0,
        excluded_kinks: 0,
        max_rel_error: 0.0,
        max_abs_error: 0.0,
        worst_index: None,
        worst_analytic: 0.0,
        worst_numeric: 0.0,
    };
    for flat in order.iter() {
        if report.checked >= cfg.samples {
            break;
        }
        let (s, o) = locate(&lengths, flat);
        let original = work.param_slices()[s][o];
        work.param_slices_mut()[s][o] = original + cfg.h;
        let (plus, pattern_plus) = loss(&work)?;
        work.param_slices_mut()[s][o] = original - cfg.h;
        let (minus, pattern_minus) = loss(&work)?;
        work.param_slices_mut()[s][o] = original;
        if pattern_plus != pattern_minus {
            report.excluded_kinks += 1;
            continue;
        }
        let numeric = (plus - minus) / (2.0 * cfg.h);
        let a = analytic_flat[flat];
        let err = relative_error(a, numeric);
        report.checked += 1;
        report.max_abs_error = report.max_abs_error.max((a - numeric).abs());
        if err > report.max_rel_error || report.worst_index.is_none() {
            report.max_rel_error = err;
            report.worst_index = Some(flat);
            report.worst_analytic = a;
            report.worst_numeric = numeric;
        }
    }
    Ok(report)
}
