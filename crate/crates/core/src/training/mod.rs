//! Configuration, the optimisation loop, checkpoints, inference and evaluation.

pub mod checkpoint;
mod config;
mod dataset;
mod trainer;

pub use checkpoint::{read_checkpoint, write_checkpoint, CHECKPOINT_MAGIC};
pub use config::{lr_schedule, DatasetSpec, TrainConfig};
pub use dataset::{load_splits, read_dataset, synth_series, write_dataset};
pub use trainer::{
    colorize, cube_tensor, evaluate, infer, load_generator, load_segnet, pretrain_seg, save_segnet, train, Discriminators, EpochSummary, StepStats, Trainer,
    ADAM_BETAS, ADAM_EPS,
};
