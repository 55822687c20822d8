//! Minimal dense differentiable-computation substrate: tensors, a
//! reverse-mode tape, parameter storage with checkpointing, and Adam.

pub mod gradcheck;
pub mod optim;
pub mod params;
pub mod tape;
pub mod tensor;

pub use optim::{adam_step, OptimizerConfig};
pub use params::{
    gaussian_tensor, init_gaussian, read_checkpoint_file, write_checkpoint_file, Checkpoint,
    CheckpointError, Param, ParamId, ParamStore,
};
pub use tape::{Tape, Var};
pub use tensor::Tensor;
