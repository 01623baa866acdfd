//! Recordings, windows and batches.
//!
//! A [`SensorSequence`] is one continuous recording with a label per sample.
//! Sequences are resampled, normalized with training statistics, cut into
//! overlapping [`Segment`]s and grouped into [`Batch`]es, optionally mixed
//! with [`mixup_batch`].

mod augment;
mod batching;
mod io;
mod manifest;
mod preprocess;
pub mod synthetic;
mod windows;

pub use augment::{mix_pairs, mixup_batch};
pub use batching::{make_batches, stack_segments, BatchStream};
pub use io::{load_sequence, write_sequence, SequenceSchema};
pub use manifest::{DatasetManifest, RecordingEntry, Split};
pub use preprocess::{apply_stats, fit_stats, resample, NormalizationStats, STD_GUARD};
pub use windows::{majority_label, segment, Segmentation, WindowConfig, WindowWarning};

use std::collections::HashSet;
use std::path::PathBuf;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::tensor::Tensor;

#[derive(Debug, Error)]
pub enum DataError {
    #[error("{path}:{line}: {message}")]
    Parse {
        path: PathBuf,
        line: u64,
        message: String,
    },
    #[error("{path}:{line}: unknown label `{token}`")]
    UnknownLabel {
        path: PathBuf,
        line: u64,
        token: String,
    },
    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("channel count mismatch: expected {expected}, got {got}")]
    ChannelMismatch { expected: usize, got: usize },
    #[error("cannot resample {from} Hz to {to} Hz: {reason}")]
    Resample { from: f64, to: f64, reason: String },
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),
    #[error("invalid label space: {0}")]
    LabelSpace(String),
    #[error("manifest error: {0}")]
    Manifest(String),
}

/// Activity classes, optionally with a designated Null class.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LabelSpace {
    names: Vec<String>,
    null_index: Option<usize>,
}

impl LabelSpace {
    pub fn new(names: Vec<String>, null_name: Option<&str>) -> Result<Self, DataError> {
        if names.is_empty() {
            return Err(DataError::LabelSpace("no classes".into()));
        }
        let mut seen = HashSet::new();
        for n in &names {
            if !seen.insert(n.as_str()) {
                return Err(DataError::LabelSpace(format!("duplicate class name `{n}`")));
            }
        }
        let null_index = match null_name {
            Some(null) => Some(
                names
                    .iter()
                    .position(|n| n == null)
                    .ok_or_else(|| DataError::LabelSpace(format!("null class `{null}` is not a class name")))?,
            ),
            None => None,
        };
        Ok(Self { names, null_index })
    }

    /// Classes named `c0`, `c1`, ... without a Null class.
    pub fn numbered(num_classes: usize) -> Self {
        Self {
            names: (0..num_classes).map(|c| format!("c{c}")).collect(),
            null_index: None,
        }
    }

    pub fn num_classes(&self) -> usize {
        self.names.len()
    }

    pub fn names(&self) -> &[String] {
        &self.names
    }

    pub fn name(&self, index: usize) -> &str {
        &self.names[index]
    }

    pub fn null_index(&self) -> Option<usize> {
        self.null_index
    }

    pub fn index_of(&self, token: &str) -> Option<usize> {
        self.names.iter().position(|n| n == token)
    }

    /// Re-checks invariants after deserialization.
    pub fn validate(&self) -> Result<(), DataError> {
        Self::new(
            self.names.clone(),
            self.null_index.map(|i| self.names.get(i).map(String::as_str).unwrap_or("")),
        )
        .map(|_| ())
    }
}

/// One continuous multi-channel recording.
#[derive(Clone, Debug, PartialEq)]
pub struct SensorSequence {
    pub id: String,
    pub subject: Option<String>,
    pub run: Option<String>,
    pub sample_rate_hz: f64,
    pub channel_names: Vec<String>,
    /// Channel-major values: channel `d`, sample `n` at `d * len + n`.
    values: Vec<f64>,
    labels: Vec<usize>,
}

impl SensorSequence {
    pub fn new(
        id: impl Into<String>,
        sample_rate_hz: f64,
        channel_names: Vec<String>,
        values: Vec<f64>,
        labels: Vec<usize>,
        num_classes: usize,
    ) -> Result<Self, DataError> {
        let d = channel_names.len();
        if d == 0 {
            return Err(DataError::InvalidParameter("sequence without channels".into()));
        }
        if values.len() != d * labels.len() {
            return Err(DataError::InvalidParameter(format!(
                "{} values for {d} channels × {} labels",
                values.len(),
                labels.len()
            )));
        }
        if let Some(&bad) = labels.iter().find(|&&l| l >= num_classes) {
            return Err(DataError::InvalidParameter(format!(
                "label {bad} outside [0, {num_classes})"
            )));
        }
        Ok(Self {
            id: id.into(),
            subject: None,
            run: None,
            sample_rate_hz,
            channel_names,
            values,
            labels,
        })
    }

    pub fn channels(&self) -> usize {
        self.channel_names.len()
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn channel(&self, d: usize) -> &[f64] {
        let n = self.len();
        &self.values[d * n..(d + 1) * n]
    }

    pub fn value(&self, d: usize, n: usize) -> f64 {
        self.values[d * self.len() + n]
    }

    pub fn labels(&self) -> &[usize] {
        &self.labels
    }

    /// `[D, len]` window starting at `start`.
    pub fn window(&self, start: usize, len: usize) -> Tensor {
        let d = self.channels();
        let mut data = Vec::with_capacity(d * len);
        for c in 0..d {
            data.extend_from_slice(&self.channel(c)[start..start + len]);
        }
        Tensor::new(vec![d, len], data).expect("window shape")
    }

    fn with_values(&self, values: Vec<f64>, labels: Vec<usize>, sample_rate_hz: f64) -> Self {
        Self {
            id: self.id.clone(),
            subject: self.subject.clone(),
            run: self.run.clone(),
            sample_rate_hz,
            channel_names: self.channel_names.clone(),
            values,
            labels,
        }
    }
}

/// Where a window came from.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct Origin {
    pub sequence: usize,
    pub start: usize,
}

/// A `[D, W]` window with a soft label on the class simplex.
#[derive(Clone, Debug, PartialEq)]
pub struct Segment {
    pub window: Tensor,
    pub label: Vec<f64>,
    pub origin: Origin,
}

impl Segment {
    /// Index of the largest label mass (lowest index on ties).
    pub fn hard_label(&self) -> usize {
        argmax(&self.label)
    }
}

/// Stacked windows `[B, D, W]` and labels `[B, classes]`.
#[derive(Clone, Debug, PartialEq)]
pub struct Batch {
    pub windows: Tensor,
    pub labels: Tensor,
    pub origins: Vec<Origin>,
}

impl Batch {
    pub fn len(&self) -> usize {
        self.origins.len()
    }

    pub fn is_empty(&self) -> bool {
        self.origins.is_empty()
    }
}

pub fn one_hot(class: usize, num_classes: usize) -> Vec<f64> {
    let mut v = vec![0.0; num_classes];
    v[class] = 1.0;
    v
}

/// First index of the maximum.
pub fn argmax(values: &[f64]) -> usize {
    let mut best = 0;
    for (i, &v) in values.iter().enumerate() {
        if v > values[best] {
            best = i;
        }
    }
    best
}
