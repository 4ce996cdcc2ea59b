use serde::{Deserialize, Serialize};

use super::params::Parameters;
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AdamConfig {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl AdamConfig {
    pub fn with_lr(lr: f64) -> Self {
        AdamConfig {
            lr,
            ..Default::default()
        }
    }
}

impl Default for AdamConfig {
    fn default() -> Self {
        AdamConfig {
            lr: 1e-3,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
        }
    }
}

/// First and second moment estimates, one flat vector per parameter slice.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct AdamState {
    pub m: Vec<Vec<f64>>,
    pub v: Vec<Vec<f64>>,
    pub t: u64,
}

impl AdamState {
    pub fn new<P: Parameters>(params: &P) -> Self {
        let shapes: Vec<usize> = params.param_slices().iter().map(|s| s.len()).collect();
        AdamState {
            m: shapes.iter().map(|&n| vec![0.0; n]).collect(),
            v: shapes.iter().map(|&n| vec![0.0; n]).collect(),
            t: 0,
        }
    }
}

/// One bias-corrected Adam update. Nothing is modified unless every new
/// parameter and moment is finite.
pub fn adam_step<P: Parameters>(
    params: &mut P,
    grads: &P,
    state: &mut AdamState,
    cfg: &AdamConfig,
) -> Result<()> {
    let g_slices = grads.param_slices();
    let p_slices = params.param_slices();
    if g_slices.len() != p_slices.len()
        || state.m.len() != p_slices.len()
        || g_slices
            .iter()
            .zip(&p_slices)
            .zip(&state.m)
            .any(|((g, p), m)| g.len() != p.len() || m.len() != p.len())
    {
        return Err(Error::InvalidArgument(
            "parameter, gradient and optimizer shapes differ".into(),
        ));
    }
    let t = state.t + 1;
    let bc1 = 1.0 - cfg.beta1.powi(t as i32);
    let bc2 = 1.0 - cfg.beta2.powi(t as i32);
    let mut new_p: Vec<Vec<f64>> = Vec::with_capacity(p_slices.len());
    let mut new_m: Vec<Vec<f64>> = Vec::with_capacity(p_slices.len());
    let mut new_v: Vec<Vec<f64>> = Vec::with_capacity(p_slices.len());
    for (i, (p, g)) in p_slices.iter().zip(&g_slices).enumerate() {
        let mut np = Vec::with_capacity(p.len());
        let mut nm = Vec::with_capacity(p.len());
        let mut nv = Vec::with_capacity(p.len());
        for j in 0..p.len() {
            let m = cfg.beta1 * state.m[i][j] + (1.0 - cfg.beta1) * g[j];
            let v = cfg.beta2 * state.v[i][j] + (1.0 - cfg.beta2) * g[j] * g[j];
            let step = cfg.lr * (m / bc1) / ((v / bc2).sqrt() + cfg.eps);
            let w = p[j] - step;
            if !(w.is_finite() && m.is_finite() && v.is_finite()) {
                return Err(Error::NumericalFault {
                    network: "adam".into(),
                    layer: i,
                });
            }
            np.push(w);
            nm.push(m);
            nv.push(v);
        }
        new_p.push(np);
        new_m.push(nm);
        new_v.push(nv);
    }
    drop(p_slices);
    for (dst, src) in params.param_slices_mut().into_iter().zip(&new_p) {
        dst.copy_from_slice(src);
    }
    state.m = new_m;
    state.v = new_v;
    state.t = t;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[derive(Clone)]
    struct Scalars(Vec<f64>);

    impl Parameters for Scalars {
        fn param_slices(&self) -> Vec<&[f64]> {
            vec![&self.0]
        }
        fn param_slices_mut(&mut self) -> Vec<&mut [f64]> {
            vec![&mut self.0]
        }
    }

    #[test]
    fn first_step_is_lr() {
        let mut w = Scalars(vec![0.0]);
        let g = Scalars(vec![1.0]);
        let mut s = AdamState::new(&w);
        adam_step(&mut w, &g, &mut s, &AdamConfig::with_lr(0.001)).unwrap();
        // m̂ = v̂ = 1, so the step is lr / (1 + eps)
        let oracle = -0.001 / (1.0 + 1e-8);
        assert!((w.0[0] - oracle).abs() < 1e-18);
        assert!((w.0[0] + 0.001).abs() < 1e-10);
        assert_eq!(s.t, 1);
    }

    #[test]
    fn zero_grad_and_zero_lr_are_no_ops() {
        let start = vec![0.5, -2.0, 3.25];
        let mut w = Scalars(start.clone());
        let mut s = AdamState::new(&w);
        for _ in 0..5 {
            adam_step(
                &mut w,
                &Scalars(vec![0.0; 3]),
                &mut s,
                &AdamConfig::default(),
            )
            .unwrap();
        }
        assert_eq!(w.0, start);
        let mut s = AdamState::new(&w);
        for k in 0..5 {
            let g = Scalars(vec![k as f64, -7.0, 1e6]);
            adam_step(&mut w, &g, &mut s, &AdamConfig::with_lr(0.0)).unwrap();
        }
        assert_eq!(w.0, start);
    }

    #[test]
    fn non_finite_gradient_is_rejected_without_mutation() {
        let mut w = Scalars(vec![1.0, 2.0]);
        let mut s = AdamState::new(&w);
        let err = adam_step(
            &mut w,
            &Scalars(vec![0.1, f64::NAN]),
            &mut s,
            &AdamConfig::default(),
        );
        assert!(matches!(err, Err(Error::NumericalFault { .. })));
        assert_eq!(w.0, vec![1.0, 2.0]);
        assert_eq!(s.t, 0);
    }

    #[test]
    fn trajectories_are_reproducible() {
        let run = || {
            let mut w = Scalars(vec![0.3, -0.1]);
            let mut s = AdamState::new(&w);
            let mut traj = Vec::new();
            for k in 0..20 {
                let g = Scalars(vec![w.0[0] * 2.0 - 0.1 * k as f64, w.0[1].sin()]);
                adam_step(&mut w, &g, &mut s, &AdamConfig::default()).unwrap();
                traj.push(w.0.clone());
            }
            traj
        };
        assert_eq!(run(), run());
    }
}
