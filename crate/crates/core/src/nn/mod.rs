//! Minimal differentiable layer engine: convolutions, pooling, per-channel
//! affine, ReLU, residual and dense blocks, a linear head, and Adam.
//!
//! Training is deterministic given (seed, config, data). The per-sample
//! batch work may run on multiple threads, but gradients are reduced in
//! sample order, so results are bitwise identical to a sequential run.

mod adam;
mod checkpoint;
mod engine;
mod models;
mod params;
mod spec;
mod train;

pub use adam::{adam_step, AdamState, Optimizer};
pub use checkpoint::{load_checkpoint, save_checkpoint};
pub use models::{mini_dense, mini_res, model_by_name};
pub use params::{ParamEntry, ParameterSet};
pub use spec::{LayerSpec, Network, NetworkSpec};
pub use train::{
    backward, evaluate_mean_loss, forward, predict, train, train_with_validation, TrainConfig,
    TrainRun,
};
