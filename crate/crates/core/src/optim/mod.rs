//! Adam and the epoch-based training / evaluation loop.

mod adam;
mod train;

pub use adam::{adam_step, AdamConfig, AdamState};
pub use train::{
    augmented_sample, case_metrics, epoch_order, evaluate, predict_slices, run_epoch, split_cases,
    train_epoch, CaseMetrics, EpochReport, EvalReport, Metrics, Sample, TrainPlan,
};

use thiserror::Error;

use crate::augment::AugmentError;
use crate::model::{MapError, ModelError};
use crate::objective::ObjectiveError;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum TrainError {
    #[error("shape error: {0}")]
    Shape(String),
    #[error("configuration error: {0}")]
    Config(String),
    #[error("data error: {0}")]
    Data(String),
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Objective(#[from] ObjectiveError),
    #[error(transparent)]
    Augment(#[from] AugmentError),
    #[error(transparent)]
    Map(#[from] MapError),
}
