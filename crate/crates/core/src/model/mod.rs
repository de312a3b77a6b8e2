//! Network assembly, forward/backward passes, mask thresholding and
//! checkpoint serialization.

mod checkpoint;
mod config;
mod maps;
mod network;

pub use checkpoint::{load_checkpoint, save_checkpoint, Checkpoint, CheckpointError, CHECKPOINT_MAGIC, CHECKPOINT_VERSION};
pub use config::{BlockOrder, LossKind, NetworkConfig};
pub use maps::{expand_nearest, predict_mask, shrink_mask, shrink_mean, LabelMask, MapError, ProbMap};
pub use network::{ConvBlock, ConvUnit, ForwardCache, Gradients, Network};

use thiserror::Error;

use crate::layers::LayerError;
use crate::tensor::TensorError;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ModelError {
    #[error("configuration error: {0}")]
    Config(String),
    #[error("shape error: {0}")]
    Shape(String),
    #[error("cache error: {0}")]
    Cache(String),
    #[error(transparent)]
    Layer(#[from] LayerError),
    #[error(transparent)]
    Tensor(#[from] TensorError),
    #[error(transparent)]
    Map(#[from] MapError),
}
