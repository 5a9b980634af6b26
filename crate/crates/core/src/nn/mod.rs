//! Minimal numerical substrate: dense tensors, layers with explicit
//! backward passes, Adam, gradient checking and checkpoints.

mod checkpoint;
mod gradcheck;
mod layers;
mod optim;
mod params;
mod tensor;

pub use checkpoint::{load_checkpoint, save_checkpoint, CheckpointManifest, TensorRecord};
pub use gradcheck::{
    grad_check, relative_error, Differentiable, GradCheckOptions, GradCheckReport, Mismatch,
};
pub use layers::{
    mean_pool_time, mean_pool_time_backward, rect, rect_backward, softmax, softmax_backward,
    Conv1d, LayerNorm, LayerNormCache, Linear, LAYERNORM_EPS,
};
pub use optim::{adam_step, AdamConfig, AdamState};
pub use params::{Gradients, ParamEntry, ParamId, ParamStore};
pub use tensor::Tensor;
