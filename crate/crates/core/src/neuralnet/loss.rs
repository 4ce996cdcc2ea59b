//! Training losses with their gradients. All values are averaged over the
//! batch so that gradients do not scale with batch size.

use ndarray::{Array2, ArrayView2, Zip};
use serde::{Deserialize, Serialize};

use super::LATENT_DIM;
use crate::error::{Error, Result};
use crate::preproc::MinMax;

/// Diagonal Gaussian over the latent space of one example.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LatentGaussian {
    pub mean: Vec<f64>,
    pub log_var: Vec<f64>,
}

impl LatentGaussian {
    pub fn validate(&self) -> Result<()> {
        if self.mean.len() != LATENT_DIM || self.log_var.len() != LATENT_DIM {
            return Err(Error::InvalidArgument(format!(
                "latent must be {LATENT_DIM}+{LATENT_DIM} values"
            )));
        }
        if self
            .mean
            .iter()
            .chain(&self.log_var)
            .any(|v| !v.is_finite())
        {
            return Err(Error::InvalidArgument("non-finite latent".into()));
        }
        Ok(())
    }

    pub fn variance(&self) -> Vec<f64> {
        self.log_var.iter().map(|v| v.exp()).collect()
    }
}

/// KL divergence of `N(mean, diag exp(log_var))` from the standard normal.
pub fn kl_to_standard_normal(mean: &[f64], log_var: &[f64]) -> f64 {
    -0.5 * mean
        .iter()
        .zip(log_var)
        .map(|(&m, &lv)| 1.0 + lv - m * m - lv.exp())
        .sum::<f64>()
}

#[derive(Debug, Clone)]
pub struct VaeLoss {
    pub total: f64,
    pub mse: f64,
    pub kl: f64,
    pub d_recon: Array2<f64>,
    pub d_mean: Array2<f64>,
    pub d_log_var: Array2<f64>,
}

fn check_same(a: &ArrayView2<f64>, b: &ArrayView2<f64>, what: &str) -> Result<()> {
    if a.dim() != b.dim() {
        return Err(Error::InvalidArgument(format!(
            "{what}: shape {:?} vs {:?}",
            a.dim(),
            b.dim()
        )));
    }
    Ok(())
}

/// Reconstruction MSE plus `beta` times the KL term.
pub fn vae_loss(
    recon: ArrayView2<f64>,
    target: ArrayView2<f64>,
    mean: ArrayView2<f64>,
    log_var: ArrayView2<f64>,
    beta: f64,
) -> Result<VaeLoss> {
    check_same(&recon, &target, "reconstruction vs target")?;
    check_same(&mean, &log_var, "mean vs log-variance")?;
    if recon.nrows() != mean.nrows() || recon.nrows() == 0 {
        return Err(Error::InvalidArgument(
            "batch sizes differ or are empty".into(),
        ));
    }
    let b = recon.nrows() as f64;
    let k = recon.ncols() as f64;
    let diff = &recon - &target;
    let mse = diff.iter().map(|d| d * d).sum::<f64>() / (k * b);
    let d_recon = diff * (2.0 / (k * b));
    let mut kl = 0.0;
    Zip::from(&mean)
        .and(&log_var)
        .for_each(|&m, &lv| kl += 1.0 + lv - m * m - lv.exp());
    let kl = -0.5 * kl / b;
    let d_mean = mean.mapv(|m| beta * m / b);
    let d_log_var = log_var.mapv(|lv| beta * 0.5 * (lv.exp() - 1.0) / b);
    Ok(VaeLoss {
        total: mse + beta * kl,
        mse,
        kl,
        d_recon,
        d_mean,
        d_log_var,
    })
}

/// Inputs of the predictor loss, batch-major.
#[derive(Debug, Clone, Copy)]
pub struct DnnLossInputs<'a> {
    pub pred_mean: ArrayView2<'a, f64>,
    pub pred_log_var: ArrayView2<'a, f64>,
    pub target_mean: ArrayView2<'a, f64>,
    pub target_log_var: ArrayView2<'a, f64>,
    /// Decoder output for the predicted mean, normalized.
    pub decoded: ArrayView2<'a, f64>,
    /// Ground-truth HRTF, normalized.
    pub target_hrtf: ArrayView2<'a, f64>,
    pub decoded_norm: &'a MinMax,
    pub target_norm: &'a MinMax,
}

#[derive(Debug, Clone)]
pub struct DnnLoss {
    pub total: f64,
    pub latent_mse: f64,
    /// Batch-mean log-spectral distance in dB.
    pub lsd_db: f64,
    pub d_mean: Array2<f64>,
    pub d_log_var: Array2<f64>,
    pub d_decoded: Array2<f64>,
}

/// Latent MSE over the concatenated `(mean, log_var)` plus `lambda_lsd`
/// times the log-spectral distance between denormalized spectra.
pub fn dnn_loss(inp: DnnLossInputs<'_>, lambda_lsd: f64) -> Result<DnnLoss> {
    if inp.decoded_norm != inp.target_norm {
        return Err(Error::Config(
            "decoded and target HRTFs use different normalization statistics".into(),
        ));
    }
    check_same(&inp.pred_mean, &inp.target_mean, "predicted vs target mean")?;
    check_same(
        &inp.pred_log_var,
        &inp.target_log_var,
        "predicted vs target log-variance",
    )?;
    check_same(&inp.pred_mean, &inp.pred_log_var, "mean vs log-variance")?;
    check_same(&inp.decoded, &inp.target_hrtf, "decoded vs target HRTF")?;
    let rows = inp.pred_mean.nrows();
    if rows == 0 || inp.decoded.nrows() != rows {
        return Err(Error::InvalidArgument(
            "batch sizes differ or are empty".into(),
        ));
    }
    let b = rows as f64;
    let n_latent = (2 * inp.pred_mean.ncols()) as f64;
    let dm = &inp.pred_mean - &inp.target_mean;
    let dl = &inp.pred_log_var - &inp.target_log_var;
    let latent_mse = (dm.iter().map(|v| v * v).sum::<f64>()
        + dl.iter().map(|v| v * v).sum::<f64>())
        / (n_latent * b);
    let d_mean = dm * (2.0 / (n_latent * b));
    let d_log_var = dl * (2.0 / (n_latent * b));

    let k = inp.decoded.ncols();
    let spans: Vec<f64> = (0..k).map(|j| inp.decoded_norm.span(j)).collect();
    let mut d_decoded = Array2::zeros(inp.decoded.dim());
    let mut lsd_sum = 0.0;
    for ((dec, tgt), mut grad) in inp
        .decoded
        .rows()
        .into_iter()
        .zip(inp.target_hrtf.rows())
        .zip(d_decoded.rows_mut())
    {
        // dB difference; the min offsets cancel
        let diff: Vec<f64> = (0..k).map(|j| spans[j] * (dec[j] - tgt[j])).collect();
        let lsd = (diff.iter().map(|d| d * d).sum::<f64>() / k as f64).sqrt();
        lsd_sum += lsd;
        if lsd > 0.0 && lambda_lsd != 0.0 {
            for j in 0..k {
                grad[j] = lambda_lsd * spans[j] * diff[j] / (k as f64 * lsd * b);
            }
        }
    }
    let lsd_db = lsd_sum / b;
    Ok(DnnLoss {
        total: latent_mse + lambda_lsd * lsd_db,
        latent_mse,
        lsd_db,
        d_mean,
        d_log_var,
        d_decoded,
    })
}

/// Per-row LSD in dB between two normalized batches under one min-max.
pub fn batch_lsd_db(a: ArrayView2<f64>, b: ArrayView2<f64>, norm: &MinMax) -> Vec<f64> {
    let k = a.ncols();
    let mut out = Vec::with_capacity(a.nrows());
    for (x, y) in a.rows().into_iter().zip(b.rows()) {
        let mut acc = 0.0;
        Zip::indexed(&x).and(&y).for_each(|j, &p, &q| {
            let d = norm.span(j) * (p - q);
            acc += d * d;
        });
        out.push((acc / k as f64).sqrt());
    }
    out
}
