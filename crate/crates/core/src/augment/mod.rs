//! On-the-fly geometric augmentation: shift, rotation, zoom and a smooth
//! random displacement field, resampled with cubic B-splines (images) or
//! nearest neighbour (masks).

mod bspline;
mod transform;

pub use bspline::{bspline_sample, BSplineImage};
pub use transform::{
    apply_transform, augment_pair, border_mean, elastic_field, sample_transform, AugmentConfig,
    Interpolation, TransformSpec,
};

use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum AugmentError {
    #[error("shape error: {0}")]
    Shape(String),
    #[error("invalid augmentation config: {0}")]
    Config(String),
}
