//! Sparse autoencoder feature discovery over one layer's activations.

mod adam;
pub mod checkpoint;
mod loss;
mod metrics;
mod model;
mod train;

pub use adam::Adam;
pub use loss::{loss_and_gradients, sae_loss, Gradients, LossParts, GRAD_CHUNK};
pub use metrics::{
    activation_frequency, active_feature_count, per_sample_activity, ActivityStats, LatentCodes,
};
pub use model::{latent_width_for, SparseAutoencoder, MAX_LATENT, MIN_INPUT};
pub use train::{
    split_rows, train_sae, EarlyStopping, EpochRecord, StopDecision, TrainConfig, TrainingTrace,
    MIN_TRAIN_ROWS,
};
