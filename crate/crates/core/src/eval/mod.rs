//! Sample-wise prediction over continuous recordings, mean F1 and the
//! frame-level error taxonomy.

mod metrics;
mod misalignment;
mod predict;
mod report;

pub use metrics::{confusion_matrix, mean_f1, ClassMetrics};
pub use misalignment::{misalignment, runs, Run, Taxonomy, TAXONOMY_ROWS};
pub use predict::{predict_segments, samplewise_predict, WindowClassifier, PREDICT_CHUNK};
pub use report::{read_label_column, write_predictions, ClassScore, EvalReport, TaxonomyReport, TaxonomyRow};

use std::path::{Path, PathBuf};

use thiserror::Error;

use crate::data::DataError;
use crate::model::ModelError;
use crate::tensor::TensorError;

#[derive(Debug, Error)]
pub enum EvalError {
    #[error("stream lengths differ: truth {truth}, prediction {pred}")]
    LengthMismatch { truth: usize, pred: usize },
    #[error("label index {0} outside the label space")]
    InvalidLabel(usize),
    #[error("{path}:{line}: unknown label `{token}`")]
    UnknownLabel { path: PathBuf, line: u64, token: String },
    #[error("the error taxonomy needs a Null class")]
    NoNullClass,
    #[error("sequence `{sequence}` has {len} samples, fewer than the window width {window}")]
    SequenceTooShort { sequence: String, len: usize, window: usize },
    #[error("i/o error: {0}")]
    Io(String),
    #[error("malformed input: {0}")]
    Format(String),
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Data(#[from] DataError),
    #[error(transparent)]
    Tensor(#[from] TensorError),
}

impl EvalError {
    pub(crate) fn io(path: &Path, e: impl std::fmt::Display) -> Self {
        EvalError::Io(format!("{}: {e}", path.display()))
    }
}
