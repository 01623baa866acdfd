//! Adam training of the joint objective with mixup, step learning-rate
//! decay, validation-based model selection and resumable checkpoints.

mod adam;
mod checkpoint;
mod config;
mod fit;

pub use adam::{adam_step, OptimizerState};
pub use checkpoint::{BlockInfo, Checkpoint, CheckpointHeader, DatasetInfo, FORMAT_VERSION, MAGIC};
pub use config::{lr_at, AdamConfig, TrainConfig};
pub use fit::{fit, read_history, validation_fm, write_history, EpochMetrics, FitOutcome, HistoryRow, Trainer, Validation};

use thiserror::Error;

use crate::data::DataError;
use crate::eval::EvalError;
use crate::model::ModelError;
use crate::objective::ObjectiveError;
use crate::tensor::TensorError;

#[derive(Debug, Error)]
pub enum TrainError {
    #[error("configuration error: {0}")]
    Config(String),
    #[error("non-finite gradient or loss in `{block}`; training aborted")]
    NonFinite { block: String },
    #[error("checkpoint error: {0}")]
    Checkpoint(String),
    #[error("i/o error: {0}")]
    Io(String),
    #[error(transparent)]
    Data(#[from] DataError),
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Objective(#[from] ObjectiveError),
    #[error(transparent)]
    Eval(#[from] EvalError),
    #[error(transparent)]
    Tensor(#[from] TensorError),
}

impl TrainError {
    /// Whether the failure stems from configuration or input rather than
    /// from the computation itself.
    pub fn is_config(&self) -> bool {
        matches!(
            self,
            TrainError::Config(_) | TrainError::Data(_) | TrainError::Model(ModelError::Config(_))
        )
    }
}
