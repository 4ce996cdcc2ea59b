//! Spatially grouped personalized HRTF prediction.
//!
//! HRIRs and anthropometric measurements are turned into normalized
//! log-magnitude HRTFs and network inputs ([`preproc`]); the measurement grid
//! is partitioned into subspaces by spatial location, by diffraction effect,
//! or by a hybrid of the two ([`grouping`]); each subspace gets its own VAE and
//! latent-predicting DNN ([`neuralnet`]); and [`pipeline`] runs
//! leave-one-out cross-validation with log-spectral-distance scoring and
//! one-way ANOVA comparisons. [`datamodel::synth`] generates a spherical-head
//! dataset for runs without the CIPIC database.

pub mod datamodel;
pub mod error;
pub mod grouping;
pub mod neuralnet;
pub mod pipeline;
pub mod preproc;

pub use error::{Error, Result};
