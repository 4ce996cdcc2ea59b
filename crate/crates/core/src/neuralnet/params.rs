/// Flat access to the trainable parameters of a model.
///
/// Slices are returned in a fixed order so that a gradient buffer of the same
/// type lines up with its model slice by slice. Batch-norm running
/// statistics are not trainable and are not exposed here.
pub trait Parameters {
    fn param_slices(&self) -> Vec<&[f64]>;
    fn param_slices_mut(&mut self) -> Vec<&mut [f64]>;

    fn param_count(&self) -> usize {
        self.param_slices().iter().map(|s| s.len()).sum()
    }

    /// All trainable parameters concatenated.
    fn flat_params(&self) -> Vec<f64> {
        self.param_slices().concat()
    }

    /// A copy with every trainable parameter set to zero, for gradient accumulation.
    fn zeros_like(&self) -> Self
    where
        Self: Clone,
    {
        let mut g = self.clone();
        for s in g.param_slices_mut() {
            s.fill(0.0);
        }
        g
    }

    fn all_finite(&self) -> bool {
        self.param_slices()
            .iter()
            .all(|s| s.iter().all(|v| v.is_finite()))
    }
}
