use ndarray::{Array2, ArrayView2, Zip};
use rand::Rng;
use serde::{Deserialize, Serialize};

use super::layers::{Activation, Dense, Mlp, MlpCache, NormMode};
use super::params::Parameters;
use super::LATENT_DIM;
use crate::error::{Error, Result};
use crate::preproc::N_BINS;

pub const ENCODER_WIDTHS: [usize; 4] = [N_BINS, 128, 64, 32];
pub const DECODER_WIDTHS: [usize; 5] = [LATENT_DIM, 32, 64, 128, N_BINS];

/// Variational autoencoder over normalized HRTFs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VaeModel {
    pub encoder: Mlp,
    pub mean_head: Dense,
    pub log_var_head: Dense,
    pub decoder: Mlp,
}

/// Batch outputs of a VAE forward pass, one row per example.
#[derive(Debug, Clone, PartialEq)]
pub struct VaeOutput {
    pub reconstruction: Array2<f64>,
    pub mean: Array2<f64>,
    pub log_var: Array2<f64>,
    pub z: Array2<f64>,
}

#[derive(Debug, Clone)]
pub struct VaeCache {
    encoder: MlpCache,
    hidden: Array2<f64>,
    log_var: Array2<f64>,
    noise: Option<Array2<f64>>,
    decoder: MlpCache,
}

impl VaeCache {
    pub fn relu_pattern(&self, model: &VaeModel) -> Vec<bool> {
        let mut out = Vec::new();
        self.encoder.relu_pattern(&model.encoder, &mut out);
        self.decoder.relu_pattern(&model.decoder, &mut out);
        out
    }
}

impl VaeModel {
    pub fn new<R: Rng + ?Sized>(rng: &mut R) -> Self {
        let encoder = Mlp::hidden_stack(&ENCODER_WIDTHS, rng);
        let h = ENCODER_WIDTHS[ENCODER_WIDTHS.len() - 1];
        VaeModel {
            encoder,
            mean_head: Dense::new(h, LATENT_DIM, rng),
            log_var_head: Dense::new(h, LATENT_DIM, rng),
            decoder: Mlp::new(&DECODER_WIDTHS, Activation::Sigmoid, rng),
        }
    }

    /// Full pass. With `noise` the latent is sampled by reparameterization,
    /// otherwise the mean is decoded. Batch-norm mode is independent of
    /// sampling.
    pub fn forward(
        &self,
        x: ArrayView2<f64>,
        mode: NormMode,
        noise: Option<ArrayView2<f64>>,
    ) -> Result<(VaeOutput, VaeCache)> {
        let (hidden, enc_cache) = self.encoder.forward(x, mode, "vae encoder")?;
        let mean = self.mean_head.forward(hidden.view());
        let log_var = self.log_var_head.forward(hidden.view());
        check_finite(&mean, "vae mean head", ENCODER_WIDTHS.len() - 1)?;
        check_finite(&log_var, "vae log-variance head", ENCODER_WIDTHS.len() - 1)?;
        let z = match noise {
            Some(eps) => {
                if eps.dim() != mean.dim() {
                    return Err(Error::InvalidArgument(format!(
                        "noise shape {:?} does not match latent {:?}",
                        eps.dim(),
                        mean.dim()
                    )));
                }
                let mut z = mean.clone();
                Zip::from(&mut z)
                    .and(&log_var)
                    .and(eps)
                    .for_each(|z, &lv, &e| *z += (0.5 * lv).exp() * e);
                check_finite(&z, "vae latent sample", ENCODER_WIDTHS.len() - 1)?;
                z
            }
            None => mean.clone(),
        };
        let (reconstruction, dec_cache) = self.decoder.forward(z.view(), mode, "vae decoder")?;
        Ok((
            VaeOutput {
                reconstruction,
                mean,
                log_var: log_var.clone(),
                z,
            },
            VaeCache {
                encoder: enc_cache,
                hidden,
                log_var,
                noise: noise.map(|n| n.to_owned()),
                decoder: dec_cache,
            },
        ))
    }

    /// Latent mean and log-variance, no decoding.
    pub fn encode(&self, x: ArrayView2<f64>, mode: NormMode) -> Result<(Array2<f64>, Array2<f64>)> {
        let (hidden, _) = self.encoder.forward(x, mode, "vae encoder")?;
        Ok((
            self.mean_head.forward(hidden.view()),
            self.log_var_head.forward(hidden.view()),
        ))
    }

    pub fn decode(&self, z: ArrayView2<f64>, mode: NormMode) -> Result<(Array2<f64>, MlpCache)> {
        self.decoder.forward(z, mode, "vae decoder")
    }

    /// Gradient of a loss with respect to the decoder input, leaving every
    /// parameter untouched.
    pub fn decoder_input_grad(&self, cache: &MlpCache, d_out: ArrayView2<f64>) -> Array2<f64> {
        self.decoder.backward(cache, d_out, None)
    }

    /// Accumulate parameter gradients given loss gradients with respect to
    /// the reconstruction and the latent parameters.
    pub fn backward(
        &self,
        cache: &VaeCache,
        d_recon: ArrayView2<f64>,
        d_mean: ArrayView2<f64>,
        d_log_var: ArrayView2<f64>,
        grad: &mut VaeModel,
    ) -> Array2<f64> {
        let dz = self
            .decoder
            .backward(&cache.decoder, d_recon, Some(&mut grad.decoder));
        let d_mean_total = &d_mean + &dz;
        let mut d_lv_total = d_log_var.to_owned();
        if let Some(eps) = &cache.noise {
            Zip::from(&mut d_lv_total)
                .and(&dz)
                .and(eps)
                .and(&cache.log_var)
                .for_each(|d, &g, &e, &lv| *d += g * e * 0.5 * (0.5 * lv).exp());
        }
        let dh = self.mean_head.backward(
            cache.hidden.view(),
            d_mean_total.view(),
            Some(&mut grad.mean_head),
        ) + self.log_var_head.backward(
            cache.hidden.view(),
            d_lv_total.view(),
            Some(&mut grad.log_var_head),
        );
        self.encoder
            .backward(&cache.encoder, dh.view(), Some(&mut grad.encoder))
    }

    pub fn update_running(&mut self, cache: &VaeCache, batch_size: usize) {
        self.encoder.update_running(&cache.encoder, batch_size);
        self.decoder.update_running(&cache.decoder, batch_size);
    }

    /// Trainable parameters followed by batch-norm running statistics.
    pub fn state_vector(&self) -> Vec<f64> {
        let mut v = self.flat_params();
        v.extend(self.encoder.running_stats());
        v.extend(self.decoder.running_stats());
        v
    }
}

impl Parameters for VaeModel {
    fn param_slices(&self) -> Vec<&[f64]> {
        let mut v = self.encoder.param_slices();
        v.extend(self.mean_head.param_slices());
        v.extend(self.log_var_head.param_slices());
        v.extend(self.decoder.param_slices());
        v
    }

    fn param_slices_mut(&mut self) -> Vec<&mut [f64]> {
        let mut v = self.encoder.param_slices_mut();
        v.extend(self.mean_head.param_slices_mut());
        v.extend(self.log_var_head.param_slices_mut());
        v.extend(self.decoder.param_slices_mut());
        v
    }
}

pub(crate) fn check_finite(a: &Array2<f64>, network: &str, layer: usize) -> Result<()> {
    if a.iter().all(|v| v.is_finite()) {
        Ok(())
    } else {
        Err(Error::NumericalFault {
            network: network.to_string(),
            layer,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn batch(rows: usize, seed: u64) -> Array2<f64> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        Array2::from_shape_fn((rows, N_BINS), |_| rng.random::<f64>())
    }

    #[test]
    fn shapes() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let vae = VaeModel::new(&mut rng);
        let x = batch(4, 1);
        let (out, _) = vae.forward(x.view(), NormMode::Eval, None).unwrap();
        assert_eq!(out.reconstruction.dim(), (4, 173));
        assert_eq!(out.mean.dim(), (4, 32));
        assert_eq!(out.log_var.dim(), (4, 32));
    }

    #[test]
    fn eval_is_deterministic_and_bounded() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let vae = VaeModel::new(&mut rng);
        let x = batch(6, 2);
        let (a, _) = vae.forward(x.view(), NormMode::Eval, None).unwrap();
        let (b, _) = vae.forward(x.view(), NormMode::Eval, None).unwrap();
        assert_eq!(a, b);
        assert!(a.reconstruction.iter().all(|&v| v > 0.0 && v < 1.0));
    }

    #[test]
    fn zero_noise_equals_mean_path() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let vae = VaeModel::new(&mut rng);
        let x = batch(5, 3);
        let zeros = Array2::zeros((5, LATENT_DIM));
        for mode in [NormMode::Train, NormMode::Eval] {
            let (a, _) = vae.forward(x.view(), mode, Some(zeros.view())).unwrap();
            let (b, _) = vae.forward(x.view(), mode, None).unwrap();
            assert_eq!(a, b);
        }
    }

    #[test]
    fn noise_shape_checked() {
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        let vae = VaeModel::new(&mut rng);
        let x = batch(2, 3);
        let bad = Array2::zeros((3, LATENT_DIM));
        assert!(vae
            .forward(x.view(), NormMode::Eval, Some(bad.view()))
            .is_err());
    }
}
