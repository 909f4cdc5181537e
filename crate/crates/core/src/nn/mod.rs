//! Numeric kernels of the stage classifier: embedding lookup, bidirectional
//! LSTM, dense layers, weighted softmax, cross-entropy with exact gradients,
//! and the Adam optimizer.

mod adam;
mod checkpoint;
mod lstm;
mod matrix;
mod model;
mod params;

use thiserror::Error;

pub use adam::{adam_step, AdamState, BETA1, BETA2, EPSILON};
pub use checkpoint::{Checkpoint, TensorRecord, CHECKPOINT_FORMAT};
pub use lstm::{bilstm, lstm_forward};
pub use matrix::Matrix;
pub use model::{
    embed, forward, logits, loss_and_grads, pooled_representation, valid_len, weighted_softmax, Mode,
    Sample,
};
pub use params::{
    DenseParams, EmbeddingParams, Gate, Gradients, LstmParams, ModelDims, ModelParams, TENSOR_NAMES,
};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum NnError {
    #[error("token id {id} out of range for size {size}")]
    IndexOutOfRange { id: usize, size: usize },
    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),
    #[error("class weight {index} is not positive ({weight})")]
    NonPositiveWeight { index: usize, weight: f64 },
    #[error("empty batch")]
    EmptyBatch,
    #[error("non-finite values in {0}")]
    NonFinite(String),
    #[error("checkpoint: {0}")]
    Checkpoint(String),
}
