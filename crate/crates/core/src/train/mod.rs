//! Maximum-likelihood training of flow models.

pub mod adam;
pub mod config;
pub mod trainer;

pub use adam::{adam_step, AdamHyper, AdamState};
pub use config::TrainConfig;
pub use trainer::{nll_loss, train, EpochStats, TrainHistory};
