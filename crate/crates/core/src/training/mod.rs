//! Patch sampling, Adam, checkpoints and the training loops.

mod adam;
pub mod checkpoint;
mod config;
mod data;
mod trainer;

pub use adam::{Adam, AdamState};
pub use checkpoint::{
    decode_checkpoint, discriminator_path, encode_checkpoint, load_checkpoint, load_generator, load_network,
    read_checkpoint, save_checkpoint, CheckpointMeta, RawCheckpoint,
};
pub use config::{LossKind, TrainConfig};
pub use data::{denormalize, normalize, planes_to_tensor, sample_batch, Batch, Dataset};
pub use trainer::{
    train, train_direct, train_gan, LogRow, TrainOutput, TrainResult, Trainer, LOG_HEADER, SATURATION_EPS,
    SATURATION_PATIENCE,
};

#[cfg(test)]
mod tests;
