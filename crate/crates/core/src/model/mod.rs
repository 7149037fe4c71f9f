//! Coefficient predictor, gradients, optimizer, and training loop.

pub mod adam;
pub mod checkpoint;
pub mod mlp;
pub mod pipeline;
pub mod train;

pub use adam::{Adam, AdamConfig};
pub use checkpoint::Checkpoint;
pub use mlp::{ModelGeometry, ModelParams};
pub use pipeline::{enhance, forward_pass, loss_region, LossWeights};
pub use train::{restore_arrays, train, TrainConfig, TrainOutcome};
