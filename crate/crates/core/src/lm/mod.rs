//! Small decoder-only transformer with pre-norm blocks, explicit parameter
//! snapshots, and single SGD steps in either direction.

pub mod checkpoint;
mod config;
mod model;
mod params;
mod train;

pub use checkpoint::Checkpoint;
pub use config::ModelConfig;
pub use model::{forward, loss_and_grad, sequence_logits, ForwardTrace};
pub use params::{init_model, parameter_shapes, Direction, ModelParams, ParamSnapshot};
pub use train::{mean_loss, train, Example, TrainOptions, TrainingLog};

#[cfg(test)]
mod tests;
