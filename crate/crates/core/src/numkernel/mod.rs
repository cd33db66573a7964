//! Dense numeric kernel shared by every learning module.
//!
//! Everything is `f64` and single-owner. Models implement their own analytic
//! backward passes; [`gradient_check`] is the harness that validates them.

mod matrix;
mod ops;
mod params;
mod sparse;

pub use matrix::{cosine, dot, l2_norm, Matrix};
pub use ops::{
    bce_loss, leaky_relu, log_sigmoid, relu, relu_backward, row_softmax, sigmoid,
    softmax_backward, softmax_cross_entropy, Mask, MASK_SENTINEL,
};
pub use params::{
    adam_step, gradient_check, gradient_check_sampled, xavier_uniform, AdamConfig, Checkpoint,
    Grads, Param, ParamStore,
};
pub use sparse::SparseRows;

use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum KernelError {
    #[error("shape mismatch in {op}: {left:?} vs {right:?}")]
    ShapeMismatch {
        op: &'static str,
        left: (usize, usize),
        right: (usize, usize),
    },
    #[error("row {0} has no unmasked entries")]
    AllMaskedRow(usize),
    #[error("unknown parameter `{0}`")]
    UnknownParam(String),
    #[error("checkpoint I/O: {0}")]
    Io(String),
    #[error("malformed checkpoint: {0}")]
    MalformedCheckpoint(String),
}
