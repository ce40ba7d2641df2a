//! Minimal dense-network substrate: MLPs with reverse-mode gradients, Adam,
//! layer normalization, exact-GELU activation, and Polyak target copies.
//!
//! Everything is plain `f64` on flat `Vec`s. Networks are values: cloning a
//! net clones its parameters, and a fixed seed gives bitwise-identical
//! initialization and updates.

mod adam;
mod checkpoint;
mod mlp;

pub use adam::AdamState;
pub use checkpoint::Checkpoint;
pub use mlp::{Activation, Gradients, LayerSpec, Mlp, TargetCopy};

use thiserror::Error;

#[derive(Debug, Error)]
pub enum NnError {
    #[error("shape mismatch in {what}: expected {expected}, got {got}")]
    ShapeMismatch { what: &'static str, expected: usize, got: usize },
    #[error("non-finite value at flat index {index}")]
    NonFinite { index: usize },
    #[error("polyak rate {0} outside (0, 1]")]
    InvalidRate(f64),
    #[error("bad checkpoint: {0}")]
    BadCheckpoint(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}
