//! Forward and backward passes for every primitive in the segmentation
//! network. All functions are pure: they never mutate their inputs and
//! return gradients as fresh tensors.
//!
//! Feature maps use the `[N, C, H, W]` layout.

mod activation;
mod batchnorm;
mod conv;
mod merge;
mod pool;

pub use activation::{relu, relu_grad, softmax_channels, softmax_channels_grad};
pub use batchnorm::{
    batchnorm_grad, batchnorm_infer, batchnorm_train, BatchNormCache, BatchNormGrads,
    BatchNormParams, RunningStats,
};
pub use conv::{conv2d, conv2d_grad, ConvGrads, ConvParams, Padding};
pub use merge::{concat_channels, concat_channels_grad, residual_add, split_channels};
pub use pool::{maxpool2, maxpool2_grad, upsample_nn, upsample_nn_grad, PoolCache};

use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum LayerError {
    #[error("shape error: {0}")]
    Shape(String),
    #[error("degenerate batch: channel statistics need at least 2 values, got {0}")]
    DegenerateBatch(usize),
    #[error("cache error: {0}")]
    Cache(String),
}

pub(crate) fn dims4(shape: &[usize], what: &str) -> Result<[usize; 4], LayerError> {
    match shape {
        &[n, c, h, w] => Ok([n, c, h, w]),
        _ => Err(LayerError::Shape(format!(
            "{what} expects a rank-4 [N, C, H, W] tensor, got {shape:?}"
        ))),
    }
}
