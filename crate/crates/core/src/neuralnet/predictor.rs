use ndarray::{Array2, ArrayView2};
use rand::Rng;
use serde::{Deserialize, Serialize};

use super::layers::{Activation, Mlp, MlpCache, NormMode};
use super::params::Parameters;
use super::LATENT_DIM;
use crate::error::Result;
use crate::preproc::MODEL_INPUT_DIM;

pub const TRUNK_WIDTHS: [usize; 3] = [MODEL_INPUT_DIM, 64, 64];
pub const BRANCH_WIDTHS: [usize; 4] = [64, 128, 128, LATENT_DIM];

/// Maps anthropometrics plus a direction to the latent Gaussian of the HRTF.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PredictorDnn {
    pub trunk: Mlp,
    pub mean_branch: Mlp,
    pub log_var_branch: Mlp,
}

#[derive(Debug, Clone)]
pub struct PredictorCache {
    trunk: MlpCache,
    mean: MlpCache,
    log_var: MlpCache,
}

impl PredictorCache {
    pub fn relu_pattern(&self, model: &PredictorDnn) -> Vec<bool> {
        let mut out = Vec::new();
        self.trunk.relu_pattern(&model.trunk, &mut out);
        self.mean.relu_pattern(&model.mean_branch, &mut out);
        self.log_var.relu_pattern(&model.log_var_branch, &mut out);
        out
    }
}

impl PredictorDnn {
    pub fn new<R: Rng + ?Sized>(rng: &mut R) -> Self {
        PredictorDnn {
            trunk: Mlp::hidden_stack(&TRUNK_WIDTHS, rng),
            mean_branch: Mlp::new(&BRANCH_WIDTHS, Activation::Identity, rng),
            log_var_branch: Mlp::new(&BRANCH_WIDTHS, Activation::Identity, rng),
        }
    }

    /// Returns `(mean, log_var)`, one row per input row.
    pub fn forward(
        &self,
        x: ArrayView2<f64>,
        mode: NormMode,
    ) -> Result<(Array2<f64>, Array2<f64>, PredictorCache)> {
        let (h, trunk) = self.trunk.forward(x, mode, "dnn trunk")?;
        let (mean, mc) = self
            .mean_branch
            .forward(h.view(), mode, "dnn mean branch")?;
        let (log_var, lc) =
            self.log_var_branch
                .forward(h.view(), mode, "dnn log-variance branch")?;
        Ok((
            mean,
            log_var,
            PredictorCache {
                trunk,
                mean: mc,
                log_var: lc,
            },
        ))
    }

    pub fn backward(
        &self,
        cache: &PredictorCache,
        d_mean: ArrayView2<f64>,
        d_log_var: ArrayView2<f64>,
        grad: Option<&mut PredictorDnn>,
    ) -> Array2<f64> {
        let (gt, gm, gl) = match grad {
            Some(g) => (
                Some(&mut g.trunk),
                Some(&mut g.mean_branch),
                Some(&mut g.log_var_branch),
            ),
            None => (None, None, None),
        };
        let dh = self.mean_branch.backward(&cache.mean, d_mean, gm)
            + self.log_var_branch.backward(&cache.log_var, d_log_var, gl);
        self.trunk.backward(&cache.trunk, dh.view(), gt)
    }

    pub fn update_running(&mut self, cache: &PredictorCache, batch_size: usize) {
        self.trunk.update_running(&cache.trunk, batch_size);
        self.mean_branch.update_running(&cache.mean, batch_size);
        self.log_var_branch
            .update_running(&cache.log_var, batch_size);
    }
}

impl Parameters for PredictorDnn {
    fn param_slices(&self) -> Vec<&[f64]> {
        let mut v = self.trunk.param_slices();
        v.extend(self.mean_branch.param_slices());
        v.extend(self.log_var_branch.param_slices());
        v
    }

    fn param_slices_mut(&mut self) -> Vec<&mut [f64]> {
        let mut v = self.trunk.param_slices_mut();
        v.extend(self.mean_branch.param_slices_mut());
        v.extend(self.log_var_branch.param_slices_mut());
        v
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn inputs(rows: usize) -> Array2<f64> {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        Array2::from_shape_fn((rows, MODEL_INPUT_DIM), |_| rng.random::<f64>())
    }

    #[test]
    fn output_shapes_and_determinism() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let dnn = PredictorDnn::new(&mut rng);
        let x = inputs(3);
        let (m1, l1, _) = dnn.forward(x.view(), NormMode::Eval).unwrap();
        let (m2, l2, _) = dnn.forward(x.view(), NormMode::Eval).unwrap();
        assert_eq!(m1.dim(), (3, 32));
        assert_eq!(l1.dim(), (3, 32));
        assert_eq!((m1, l1), (m2, l2));
    }

    #[test]
    fn location_inputs_matter() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let dnn = PredictorDnn::new(&mut rng);
        let x = inputs(1);
        let (m, l, cache) = dnn.forward(x.view(), NormMode::Eval).unwrap();
        // d(sum of outputs)/d(input)
        let dx = dnn.backward(
            &cache,
            Array2::ones(m.dim()).view(),
            Array2::ones(l.dim()).view(),
            None,
        );
        let loc_grad: f64 = dx.row(0).iter().skip(27).map(|v| v.abs()).sum();
        assert!(loc_grad > 0.0);
        let mut y = x.clone();
        y[[0, 28]] += 0.5;
        let (m2, _, _) = dnn.forward(y.view(), NormMode::Eval).unwrap();
        assert_ne!(m, m2);
    }
}
