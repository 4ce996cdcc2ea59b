//! Loss/gradient evaluation and the two training loops (VAE first, then the
//! predictor against the frozen VAE).

use log::info;
use ndarray::{Array2, ArrayView2, Axis};
use rand::seq::SliceRandom;
use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use super::adam::{adam_step, AdamConfig, AdamState};
use super::layers::NormMode;
use super::loss::{batch_lsd_db, dnn_loss, vae_loss, DnnLoss, DnnLossInputs, VaeLoss};
use super::params::Parameters;
use super::predictor::PredictorDnn;
use super::vae::VaeModel;
use super::LATENT_DIM;
use crate::error::{Error, Result};
use crate::preproc::MinMax;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainConfig {
    pub vae_lr: f64,
    pub dnn_lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub adam_eps: f64,
    pub batch_size: usize,
    pub vae_epochs: usize,
    pub dnn_epochs: usize,
    /// Epochs without validation improvement before the predictor stops.
    pub patience: usize,
    pub kl_beta: f64,
    pub lambda_lsd: f64,
    /// Share of training examples held out for early stopping.
    pub validation_fraction: f64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            vae_lr: 1e-5,
            dnn_lr: 1e-4,
            beta1: 0.9,
            beta2: 0.999,
            adam_eps: 1e-8,
            batch_size: 256,
            vae_epochs: 300,
            dnn_epochs: 300,
            patience: 30,
            kl_beta: 1e-3,
            lambda_lsd: 0.01,
            validation_fraction: 0.1,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::Config(m.to_string()));
        if !(self.vae_lr >= 0.0 && self.dnn_lr >= 0.0) {
            return bad("learning rates must be non-negative");
        }
        if self.batch_size < 2 {
            return bad("batch size must be at least 2 for batch normalization");
        }
        if !(0.0..1.0).contains(&self.validation_fraction) {
            return bad("validation fraction must be in [0, 1)");
        }
        if !(self.kl_beta >= 0.0 && self.lambda_lsd >= 0.0) {
            return bad("loss weights must be non-negative");
        }
        Ok(())
    }

    fn adam(&self, lr: f64) -> AdamConfig {
        AdamConfig {
            lr,
            beta1: self.beta1,
            beta2: self.beta2,
            eps: self.adam_eps,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochLog {
    pub epoch: usize,
    pub train_loss: f64,
    /// Validation LSD in dB, when a validation split exists.
    pub val_lsd_db: Option<f64>,
}

/// Loss and parameter gradients of the VAE on one batch.
pub fn vae_objective(
    vae: &VaeModel,
    x: ArrayView2<f64>,
    mode: NormMode,
    noise: Option<ArrayView2<f64>>,
    beta: f64,
) -> Result<(VaeLoss, VaeModel, Vec<bool>, super::vae::VaeCache)> {
    let (out, cache) = vae.forward(x, mode, noise)?;
    let loss = vae_loss(
        out.reconstruction.view(),
        x,
        out.mean.view(),
        out.log_var.view(),
        beta,
    )?;
    let mut grad = vae.zeros_like();
    vae.backward(
        &cache,
        loss.d_recon.view(),
        loss.d_mean.view(),
        loss.d_log_var.view(),
        &mut grad,
    );
    let pattern = cache.relu_pattern(vae);
    Ok((loss, grad, pattern, cache))
}

/// Predictor training examples with targets from the frozen encoder.
#[derive(Debug, Clone)]
pub struct DnnBatch {
    pub inputs: Array2<f64>,
    pub target_mean: Array2<f64>,
    pub target_log_var: Array2<f64>,
    /// Normalized target HRTFs.
    pub target_hrtf: Array2<f64>,
}

impl DnnBatch {
    /// Encode `target_hrtf` with the (eval-mode) VAE to obtain latent targets.
    pub fn new(vae: &VaeModel, inputs: Array2<f64>, target_hrtf: Array2<f64>) -> Result<Self> {
        if inputs.nrows() != target_hrtf.nrows() {
            return Err(Error::InvalidArgument(
                "inputs and targets differ in length".into(),
            ));
        }
        let (target_mean, target_log_var) = vae.encode(target_hrtf.view(), NormMode::Eval)?;
        Ok(DnnBatch {
            inputs,
            target_mean,
            target_log_var,
            target_hrtf,
        })
    }

    pub fn len(&self) -> usize {
        self.inputs.nrows()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn select(&self, rows: &[usize]) -> DnnBatch {
        DnnBatch {
            inputs: self.inputs.select(Axis(0), rows),
            target_mean: self.target_mean.select(Axis(0), rows),
            target_log_var: self.target_log_var.select(Axis(0), rows),
            target_hrtf: self.target_hrtf.select(Axis(0), rows),
        }
    }
}

/// Loss and predictor gradients on one batch. The decoder runs in eval mode
/// and only passes gradients back to its input.
pub fn dnn_objective(
    dnn: &PredictorDnn,
    vae: &VaeModel,
    batch: &DnnBatch,
    mode: NormMode,
    lambda_lsd: f64,
    norm: &MinMax,
) -> Result<(
    DnnLoss,
    PredictorDnn,
    Vec<bool>,
    super::predictor::PredictorCache,
)> {
    let (mean, log_var, cache) = dnn.forward(batch.inputs.view(), mode)?;
    let (decoded, dec_cache) = vae.decode(mean.view(), NormMode::Eval)?;
    let loss = dnn_loss(
        DnnLossInputs {
            pred_mean: mean.view(),
            pred_log_var: log_var.view(),
            target_mean: batch.target_mean.view(),
            target_log_var: batch.target_log_var.view(),
            decoded: decoded.view(),
            target_hrtf: batch.target_hrtf.view(),
            decoded_norm: norm,
            target_norm: norm,
        },
        lambda_lsd,
    )?;
    let d_mean = &loss.d_mean + &vae.decoder_input_grad(&dec_cache, loss.d_decoded.view());
    let mut grad = dnn.zeros_like();
    dnn.backward(
        &cache,
        d_mean.view(),
        loss.d_log_var.view(),
        Some(&mut grad),
    );
    let mut pattern = cache.relu_pattern(dnn);
    let mut dec_pattern = Vec::new();
    dec_cache.relu_pattern(&vae.decoder, &mut dec_pattern);
    pattern.extend(dec_pattern);
    Ok((loss, grad, pattern, cache))
}

/// Shuffled mini-batches; a trailing batch of one row is merged into the
/// previous batch so batch statistics stay defined.
fn batches<R: Rng + ?Sized>(rows: &[usize], batch_size: usize, rng: &mut R) -> Vec<Vec<usize>> {
    let mut order = rows.to_vec();
    order.shuffle(rng);
    let mut out: Vec<Vec<usize>> = order.chunks(batch_size).map(|c| c.to_vec()).collect();
    if out.len() > 1 && out.last().map(|b| b.len()) == Some(1) {
        let tail = out.pop().expect("non-empty");
        out.last_mut().expect("non-empty").extend(tail);
    }
    out
}

/// Split `0..n` into (train, validation) index lists.
fn holdout<R: Rng + ?Sized>(n: usize, fraction: f64, rng: &mut R) -> (Vec<usize>, Vec<usize>) {
    let mut idx: Vec<usize> = (0..n).collect();
    idx.shuffle(rng);
    let n_val = ((n as f64) * fraction).floor() as usize;
    // keep at least two training rows for batch statistics
    let n_val = n_val.min(n.saturating_sub(2));
    let val = idx.split_off(n - n_val);
    idx.sort_unstable();
    let mut val = val;
    val.sort_unstable();
    (idx, val)
}

fn standard_normal<R: Rng + ?Sized>(rows: usize, rng: &mut R) -> Array2<f64> {
    Array2::from_shape_simple_fn((rows, LATENT_DIM), || rng.sample(StandardNormal))
}

/// Train a VAE on normalized HRTFs (one per row).
pub fn train_vae<R: Rng + ?Sized>(
    data: ArrayView2<f64>,
    cfg: &TrainConfig,
    rng: &mut R,
) -> Result<(VaeModel, Vec<EpochLog>)> {
    cfg.validate()?;
    if data.nrows() < 2 {
        return Err(Error::InvalidArgument(
            "VAE training needs at least two examples".into(),
        ));
    }
    let mut vae = VaeModel::new(rng);
    let mut state = AdamState::new(&vae);
    let adam = cfg.adam(cfg.vae_lr);
    let rows: Vec<usize> = (0..data.nrows()).collect();
    let mut logs = Vec::with_capacity(cfg.vae_epochs);
    for epoch in 0..cfg.vae_epochs {
        let mut total = 0.0;
        let mut seen = 0usize;
        for b in batches(&rows, cfg.batch_size, rng) {
            let x = data.select(Axis(0), &b);
            let noise = standard_normal(b.len(), rng);
            let (loss, grad, _, cache) = vae_objective(
                &vae,
                x.view(),
                NormMode::Train,
                Some(noise.view()),
                cfg.kl_beta,
            )?;
            adam_step(&mut vae, &grad, &mut state, &adam)?;
            vae.update_running(&cache, b.len());
            total += loss.total * b.len() as f64;
            seen += b.len();
        }
        let train_loss = total / seen as f64;
        info!("vae epoch {epoch}: loss {train_loss:.6}");
        logs.push(EpochLog {
            epoch,
            train_loss,
            val_lsd_db: None,
        });
    }
    if let Some(last) = logs.last() {
        info!(
            "vae trained: {} epochs, final loss {:.6}",
            logs.len(),
            last.train_loss
        );
    }
    Ok((vae, logs))
}

/// Mean LSD in dB of the predictor+decoder chain on `batch`.
pub fn evaluate_lsd(
    dnn: &PredictorDnn,
    vae: &VaeModel,
    batch: &DnnBatch,
    norm: &MinMax,
) -> Result<f64> {
    if batch.is_empty() {
        return Err(Error::InvalidArgument("empty evaluation batch".into()));
    }
    let (mean, _, _) = dnn.forward(batch.inputs.view(), NormMode::Eval)?;
    let (decoded, _) = vae.decode(mean.view(), NormMode::Eval)?;
    let lsd = batch_lsd_db(decoded.view(), batch.target_hrtf.view(), norm);
    Ok(lsd.iter().sum::<f64>() / lsd.len() as f64)
}

/// Train a predictor against a frozen VAE, with early stopping on
/// validation LSD. The best-validation parameters are returned.
pub fn train_dnn<R: Rng + ?Sized>(
    vae: &VaeModel,
    data: &DnnBatch,
    norm: &MinMax,
    cfg: &TrainConfig,
    rng: &mut R,
) -> Result<(PredictorDnn, Vec<EpochLog>)> {
    cfg.validate()?;
    if data.len() < 2 {
        return Err(Error::InvalidArgument(
            "predictor training needs at least two examples".into(),
        ));
    }
    let mut dnn = PredictorDnn::new(rng);
    let mut state = AdamState::new(&dnn);
    let adam = cfg.adam(cfg.dnn_lr);
    let (train_rows, val_rows) = holdout(data.len(), cfg.validation_fraction, rng);
    let val = (!val_rows.is_empty()).then(|| data.select(&val_rows));
    let mut best: Option<(f64, PredictorDnn)> = None;
    let mut since_best = 0usize;
    let mut logs = Vec::with_capacity(cfg.dnn_epochs);
    for epoch in 0..cfg.dnn_epochs {
        let mut total = 0.0;
        let mut seen = 0usize;
        for b in batches(&train_rows, cfg.batch_size, rng) {
            let batch = data.select(&b);
            let (loss, grad, _, cache) =
                dnn_objective(&dnn, vae, &batch, NormMode::Train, cfg.lambda_lsd, norm)?;
            adam_step(&mut dnn, &grad, &mut state, &adam)?;
            dnn.update_running(&cache, b.len());
            total += loss.total * b.len() as f64;
            seen += b.len();
        }
        let train_loss = total / seen as f64;
        let val_lsd = match &val {
            Some(v) => Some(evaluate_lsd(&dnn, vae, v, norm)?),
            None => None,
        };
        info!("dnn epoch {epoch}: loss {train_loss:.6} val lsd {val_lsd:?}");
        logs.push(EpochLog {
            epoch,
            train_loss,
            val_lsd_db: val_lsd,
        });
        if let Some(v) = val_lsd {
            if best.as_ref().is_none_or(|(b, _)| v < *b) {
                best = Some((v, dnn.clone()));
                since_best = 0;
            } else {
                since_best += 1;
                if since_best >= cfg.patience {
                    info!("dnn early stop at epoch {epoch}");
                    break;
                }
            }
        }
    }
    let model = match best {
        Some((v, m)) => {
            info!("dnn trained: best validation LSD {v:.3} dB");
            m
        }
        None => dnn,
    };
    Ok((model, logs))
}
