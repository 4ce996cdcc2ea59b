//! From-scratch networks: dense, batch-norm and activation layers with
//! hand-written backward passes, the HRTF VAE, the latent predictor, their
//! losses, Adam, finite-difference gradient checks and JSON checkpoints.

mod adam;
mod checkpoint;
mod gradcheck;
mod layers;
mod loss;
mod params;
mod predictor;
mod train;
mod vae;

pub use adam::{adam_step, AdamConfig, AdamState};
pub use checkpoint::{Checkpoint, CHECKPOINT_VERSION};
pub use gradcheck::{gradient_check, relative_error, GradCheckConfig, GradCheckReport};
pub use layers::{
    sigmoid, Activation, BatchNorm, Dense, Layer, LayerCache, Mlp, MlpCache, NormCache, NormMode,
    BN_EPSILON, BN_MOMENTUM,
};
pub use loss::{
    batch_lsd_db, dnn_loss, kl_to_standard_normal, vae_loss, DnnLoss, DnnLossInputs,
    LatentGaussian, VaeLoss,
};
pub use params::Parameters;
pub use predictor::{PredictorCache, PredictorDnn, BRANCH_WIDTHS, TRUNK_WIDTHS};
pub use train::{
    dnn_objective, evaluate_lsd, train_dnn, train_vae, vae_objective, DnnBatch, EpochLog,
    TrainConfig,
};
pub use vae::{VaeCache, VaeModel, VaeOutput, DECODER_WIDTHS, ENCODER_WIDTHS};

pub const LATENT_DIM: usize = 32;
