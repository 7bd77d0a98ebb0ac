//! Dense feed-forward networks with exact backpropagation and Adam.
//!
//! Everything is `f64`. Batches are row-major `(batch, features)` matrices.

mod activation;
mod adam;
mod mlp;

pub use activation::Activation;
pub use adam::{adam_update, AdamConfig, AdamState, ScalarAdam};
pub use mlp::{Gradients, InitConfig, Layer, Mlp, MlpCheckpoint, Tape};

use thiserror::Error;

#[derive(Debug, Error, PartialEq)]
pub enum NnError {
    #[error("input shape mismatch: expected {expected} features, got {got}")]
    InputShape { expected: usize, got: usize },
    #[error("output gradient shape mismatch: expected {expected:?}, got {got:?}")]
    GradShape {
        expected: (usize, usize),
        got: (usize, usize),
    },
    #[error("backward called without a matching forward pass")]
    MissingForward,
    #[error("invalid architecture: {0}")]
    Architecture(String),
    #[error("non-finite gradient in {block}")]
    NonFiniteGradient { block: String },
    #[error("non-finite input")]
    NonFiniteInput,
}
