//! The four autoencoder families (AE, VAE, PAAE, PAVAE).
//!
//! Pathway models route each pathway's genes through its own small encoder
//! `|p_j| -> ... -> 1`; the concatenated scores form the pathway activity
//! vector `a`, which the latent encoder compresses to `z` (or to `mu` and
//! `logvar` for the variational variants). The decoder always reconstructs
//! the full gene vector, including genes outside every pathway.

mod checkpoint;
mod config;
mod loss;
mod network;
mod train;

pub use checkpoint::{
    checkpoint_from_bytes, checkpoint_to_bytes, load_checkpoint, save_checkpoint, CHECKPOINT_MAGIC, CHECKPOINT_VERSION,
};
pub use config::{ArchitectureConfig, ModelKind, PathwayMask, ScheduleKind, TrainConfig};
pub use loss::{beta_schedule, kl_gaussian, mse_loss, KlTerm};
pub use network::{
    build_model, count_params, reparameterize, Dense, Encoded, ForwardOutputs, LayerStack, LossBreakdown, Model,
    ModelParams,
};
pub use train::{fit, FitHistory};
