//! Fully-connected networks: definition, forward traces, backpropagation,
//! optimizers and the training loop.

mod checkpoint;
mod loss;
mod mlp;
mod optim;
mod real;
mod spec;
mod train;

pub use checkpoint::{
    load_checkpoint, read_checkpoint, save_checkpoint, write_checkpoint, CheckpointManifest, CHECKPOINT_FORMAT,
};
pub use loss::{argmax, softmax_cross_entropy, Reduction};
pub use mlp::{BatchTrace, ForwardTrace, Gradients, Mlp};
pub use optim::{build_optimizer, optimizer_registry, Optimizer, OptimizerConfig};
pub use real::Real;
pub use spec::{param_count, weight_count, Activation, MlpSpec};
pub use train::{accuracy, curves_csv, evaluate, predictions, train, EpochStats, TrainConfig};
