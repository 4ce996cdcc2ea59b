//! Dense, batch-norm and activation layers with hand-written backward passes.
//!
//! Forward passes take `&self` and return a cache; backward passes consume
//! the cache and accumulate into an optional gradient buffer of the same
//! type as the model. Running statistics are updated separately so that a
//! frozen model never needs `&mut`.

use ndarray::{Array1, Array2, ArrayView2, Axis, Zip};
use rand::Rng;
use serde::{Deserialize, Serialize};

use super::params::Parameters;
use crate::error::{Error, Result};

pub const BN_MOMENTUM: f64 = 0.1;
pub const BN_EPSILON: f64 = 1e-5;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum NormMode {
    /// Batch statistics; running statistics may be updated afterwards.
    Train,
    /// Running statistics only.
    Eval,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Dense {
    /// `out × in`
    pub weights: Array2<f64>,
    pub bias: Array1<f64>,
}

impl Dense {
    /// He-style uniform fan-in initialization, zero bias.
    pub fn new<R: Rng + ?Sized>(inputs: usize, outputs: usize, rng: &mut R) -> Self {
        let limit = (6.0 / inputs as f64).sqrt();
        let weights = Array2::from_shape_fn((outputs, inputs), |_| rng.random_range(-limit..limit));
        Dense {
            weights,
            bias: Array1::zeros(outputs),
        }
    }

    pub fn inputs(&self) -> usize {
        self.weights.ncols()
    }

    pub fn outputs(&self) -> usize {
        self.weights.nrows()
    }

    pub fn forward(&self, x: ArrayView2<f64>) -> Array2<f64> {
        x.dot(&self.weights.t()) + &self.bias
    }

    pub fn backward(
        &self,
        x: ArrayView2<f64>,
        dy: ArrayView2<f64>,
        grad: Option<&mut Dense>,
    ) -> Array2<f64> {
        if let Some(g) = grad {
            g.weights += &dy.t().dot(&x);
            g.bias += &dy.sum_axis(Axis(0));
        }
        dy.dot(&self.weights)
    }
}

impl Parameters for Dense {
    fn param_slices(&self) -> Vec<&[f64]> {
        vec![
            self.weights.as_slice().expect("standard layout"),
            self.bias.as_slice().expect("standard layout"),
        ]
    }

    fn param_slices_mut(&mut self) -> Vec<&mut [f64]> {
        vec![
            self.weights.as_slice_mut().expect("standard layout"),
            self.bias.as_slice_mut().expect("standard layout"),
        ]
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BatchNorm {
    pub gamma: Array1<f64>,
    pub beta: Array1<f64>,
    pub running_mean: Array1<f64>,
    pub running_var: Array1<f64>,
    pub momentum: f64,
    pub epsilon: f64,
}

#[derive(Debug, Clone)]
pub struct NormCache {
    mode: NormMode,
    xhat: Array2<f64>,
    inv_std: Array1<f64>,
    batch_mean: Array1<f64>,
    batch_var: Array1<f64>,
}

impl BatchNorm {
    pub fn new(features: usize) -> Self {
        BatchNorm {
            gamma: Array1::ones(features),
            beta: Array1::zeros(features),
            running_mean: Array1::zeros(features),
            running_var: Array1::ones(features),
            momentum: BN_MOMENTUM,
            epsilon: BN_EPSILON,
        }
    }

    pub fn forward(&self, x: ArrayView2<f64>, mode: NormMode) -> (Array2<f64>, NormCache) {
        let (mean, var) = match mode {
            NormMode::Train => {
                let mean = x.mean_axis(Axis(0)).expect("non-empty batch");
                let var = x.var_axis(Axis(0), 0.0);
                (mean, var)
            }
            NormMode::Eval => (self.running_mean.clone(), self.running_var.clone()),
        };
        let inv_std = var.mapv(|v| 1.0 / (v + self.epsilon).sqrt());
        let xhat = (&x - &mean) * &inv_std;
        let y = &xhat * &self.gamma + &self.beta;
        (
            y,
            NormCache {
                mode,
                xhat,
                inv_std,
                batch_mean: mean,
                batch_var: var,
            },
        )
    }

    pub fn backward(
        &self,
        cache: &NormCache,
        dy: ArrayView2<f64>,
        grad: Option<&mut BatchNorm>,
    ) -> Array2<f64> {
        if let Some(g) = grad {
            g.gamma += &(&dy * &cache.xhat).sum_axis(Axis(0));
            g.beta += &dy.sum_axis(Axis(0));
        }
        let dxhat = &dy * &self.gamma;
        match cache.mode {
            NormMode::Eval => dxhat * &cache.inv_std,
            NormMode::Train => {
                let n = dy.nrows() as f64;
                let sum_dxhat = dxhat.sum_axis(Axis(0));
                let sum_dxhat_xhat = (&dxhat * &cache.xhat).sum_axis(Axis(0));
                let mut dx = dxhat * n - &sum_dxhat - &(&cache.xhat * &sum_dxhat_xhat);
                dx *= &(&cache.inv_std / n);
                dx
            }
        }
    }

    /// Fold a train-mode batch into the running statistics (unbiased variance).
    pub fn update_running(&mut self, cache: &NormCache, batch_size: usize) {
        if cache.mode != NormMode::Train {
            return;
        }
        let m = self.momentum;
        let unbias = if batch_size > 1 {
            batch_size as f64 / (batch_size as f64 - 1.0)
        } else {
            1.0
        };
        Zip::from(&mut self.running_mean)
            .and(&cache.batch_mean)
            .for_each(|r, &b| *r = (1.0 - m) * *r + m * b);
        Zip::from(&mut self.running_var)
            .and(&cache.batch_var)
            .for_each(|r, &b| *r = (1.0 - m) * *r + m * b * unbias);
    }
}

impl Parameters for BatchNorm {
    fn param_slices(&self) -> Vec<&[f64]> {
        vec![
            self.gamma.as_slice().expect("standard layout"),
            self.beta.as_slice().expect("standard layout"),
        ]
    }

    fn param_slices_mut(&mut self) -> Vec<&mut [f64]> {
        vec![
            self.gamma.as_slice_mut().expect("standard layout"),
            self.beta.as_slice_mut().expect("standard layout"),
        ]
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Activation {
    Relu,
    Sigmoid,
    Identity,
}

/// Dense → optional batch norm → activation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Layer {
    pub dense: Dense,
    pub norm: Option<BatchNorm>,
    pub activation: Activation,
}

#[derive(Debug, Clone)]
pub struct LayerCache {
    input: Array2<f64>,
    norm: Option<NormCache>,
    pre_activation: Array2<f64>,
    output: Array2<f64>,
}

impl LayerCache {
    pub fn output(&self) -> &Array2<f64> {
        &self.output
    }
}

impl Layer {
    pub fn hidden<R: Rng + ?Sized>(inputs: usize, outputs: usize, rng: &mut R) -> Self {
        Layer {
            dense: Dense::new(inputs, outputs, rng),
            norm: Some(BatchNorm::new(outputs)),
            activation: Activation::Relu,
        }
    }

    pub fn output<R: Rng + ?Sized>(
        inputs: usize,
        outputs: usize,
        activation: Activation,
        rng: &mut R,
    ) -> Self {
        Layer {
            dense: Dense::new(inputs, outputs, rng),
            norm: None,
            activation,
        }
    }

    pub fn forward(&self, x: ArrayView2<f64>, mode: NormMode) -> LayerCache {
        let z = self.dense.forward(x);
        let (pre, norm) = match &self.norm {
            Some(bn) => {
                let (y, c) = bn.forward(z.view(), mode);
                (y, Some(c))
            }
            None => (z, None),
        };
        let output = match self.activation {
            Activation::Relu => pre.mapv(|v| v.max(0.0)),
            Activation::Sigmoid => pre.mapv(sigmoid),
            Activation::Identity => pre.clone(),
        };
        LayerCache {
            input: x.to_owned(),
            norm,
            pre_activation: pre,
            output,
        }
    }

    pub fn backward(
        &self,
        cache: &LayerCache,
        dy: ArrayView2<f64>,
        grad: Option<&mut Layer>,
    ) -> Array2<f64> {
        let dpre = match self.activation {
            Activation::Relu => {
                let mut d = dy.to_owned();
                Zip::from(&mut d)
                    .and(&cache.pre_activation)
                    .for_each(|d, &p| {
                        if p <= 0.0 {
                            *d = 0.0
                        }
                    });
                d
            }
            Activation::Sigmoid => {
                let mut d = dy.to_owned();
                Zip::from(&mut d)
                    .and(&cache.output)
                    .for_each(|d, &s| *d *= s * (1.0 - s));
                d
            }
            Activation::Identity => dy.to_owned(),
        };
        let (dense_grad, norm_grad) = match grad {
            Some(g) => (Some(&mut g.dense), g.norm.as_mut()),
            None => (None, None),
        };
        let dz = match (&self.norm, &cache.norm) {
            (Some(bn), Some(c)) => bn.backward(c, dpre.view(), norm_grad),
            _ => dpre,
        };
        self.dense
            .backward(cache.input.view(), dz.view(), dense_grad)
    }
}

impl Parameters for Layer {
    fn param_slices(&self) -> Vec<&[f64]> {
        let mut v = self.dense.param_slices();
        if let Some(bn) = &self.norm {
            v.extend(bn.param_slices());
        }
        v
    }

    fn param_slices_mut(&mut self) -> Vec<&mut [f64]> {
        let mut v = self.dense.param_slices_mut();
        if let Some(bn) = &mut self.norm {
            v.extend(bn.param_slices_mut());
        }
        v
    }
}

#[inline]
pub fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

/// A stack of layers.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Mlp {
    pub layers: Vec<Layer>,
}

#[derive(Debug, Clone)]
pub struct MlpCache {
    layers: Vec<LayerCache>,
}

impl MlpCache {
    /// ReLU on/off pattern of every unit, used to detect kinks.
    pub fn relu_pattern(&self, mlp: &Mlp, out: &mut Vec<bool>) {
        for (layer, cache) in mlp.layers.iter().zip(&self.layers) {
            if layer.activation == Activation::Relu {
                out.extend(cache.pre_activation.iter().map(|&p| p > 0.0));
            }
        }
    }
}

impl Mlp {
    /// `widths = [in, h1, ..., out]`; every layer but the last is hidden
    /// (dense + BN + ReLU), the last uses `output_activation` without BN.
    pub fn new<R: Rng + ?Sized>(
        widths: &[usize],
        output_activation: Activation,
        rng: &mut R,
    ) -> Self {
        assert!(widths.len() >= 2, "an MLP needs at least one layer");
        let n = widths.len() - 1;
        let layers = (0..n)
            .map(|i| {
                if i + 1 < n {
                    Layer::hidden(widths[i], widths[i + 1], rng)
                } else {
                    Layer::output(widths[i], widths[i + 1], output_activation, rng)
                }
            })
            .collect();
        Mlp { layers }
    }

    /// Hidden layers only (dense + BN + ReLU on every layer).
    pub fn hidden_stack<R: Rng + ?Sized>(widths: &[usize], rng: &mut R) -> Self {
        let layers = widths
            .windows(2)
            .map(|w| Layer::hidden(w[0], w[1], rng))
            .collect();
        Mlp { layers }
    }

    pub fn output_width(&self) -> usize {
        self.layers.last().map(|l| l.dense.outputs()).unwrap_or(0)
    }

    pub fn forward(
        &self,
        x: ArrayView2<f64>,
        mode: NormMode,
        network: &str,
    ) -> Result<(Array2<f64>, MlpCache)> {
        let mut caches: Vec<LayerCache> = Vec::with_capacity(self.layers.len());
        for (i, layer) in self.layers.iter().enumerate() {
            let input = match caches.last() {
                Some(c) => c.output.view(),
                None => x,
            };
            let cache = layer.forward(input, mode);
            // ReLU maps NaN to 0, so the pre-activation is checked as well
            if cache
                .pre_activation
                .iter()
                .chain(cache.output.iter())
                .any(|v| !v.is_finite())
            {
                return Err(Error::NumericalFault {
                    network: network.to_string(),
                    layer: i,
                });
            }
            caches.push(cache);
        }
        let out = caches
            .last()
            .map(|c| c.output.clone())
            .unwrap_or_else(|| x.to_owned());
        Ok((out, MlpCache { layers: caches }))
    }

    pub fn backward(
        &self,
        cache: &MlpCache,
        dy: ArrayView2<f64>,
        mut grad: Option<&mut Mlp>,
    ) -> Array2<f64> {
        let mut d = dy.to_owned();
        for (i, (layer, c)) in self.layers.iter().zip(&cache.layers).enumerate().rev() {
            let g = grad.as_deref_mut().map(|g| &mut g.layers[i]);
            d = layer.backward(c, d.view(), g);
        }
        d
    }

    pub fn update_running(&mut self, cache: &MlpCache, batch_size: usize) {
        for (layer, c) in self.layers.iter_mut().zip(&cache.layers) {
            if let (Some(bn), Some(nc)) = (&mut layer.norm, &c.norm) {
                bn.update_running(nc, batch_size);
            }
        }
    }

    /// Running mean and variance of every batch-norm layer, concatenated.
    pub fn running_stats(&self) -> Vec<f64> {
        self.layers
            .iter()
            .filter_map(|l| l.norm.as_ref())
            .flat_map(|bn| bn.running_mean.iter().chain(bn.running_var.iter()).copied())
            .collect()
    }
}

impl Parameters for Mlp {
    fn param_slices(&self) -> Vec<&[f64]> {
        self.layers.iter().flat_map(|l| l.param_slices()).collect()
    }

    fn param_slices_mut(&mut self) -> Vec<&mut [f64]> {
        self.layers
            .iter_mut()
            .flat_map(|l| l.param_slices_mut())
            .collect()
    }
}
