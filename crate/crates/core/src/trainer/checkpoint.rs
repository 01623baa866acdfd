//! Binary checkpoint container.
//!
//! Layout: the 8-byte magic `HARFCKPT`, a little-endian `u32` format
//! version, a little-endian `u64` header length, the JSON header, then the
//! raw little-endian `f64` values of every parameter block, every first
//! moment and every second moment, each in block order.

use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{OptimizerState, TrainConfig, TrainError};
use crate::config::{ModelConfig, Toggles};
use crate::data::{LabelSpace, NormalizationStats};
use crate::model::{ModelParams, ParamBlock};
use crate::rng::RngState;
use crate::tensor::Tensor;

pub const MAGIC: &[u8; 8] = b"HARFCKPT";
pub const FORMAT_VERSION: u32 = 1;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BlockInfo {
    pub name: String,
    pub shape: Vec<usize>,
}

/// Label names, channel names and normalization statistics of the data a
/// model was trained on.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DatasetInfo {
    pub labels: Vec<String>,
    pub null_label: Option<String>,
    pub channels: Vec<String>,
    pub normalization: Option<NormalizationStats>,
}

impl DatasetInfo {
    pub fn label_space(&self) -> Result<LabelSpace, TrainError> {
        Ok(LabelSpace::new(self.labels.clone(), self.null_label.as_deref())?)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CheckpointHeader {
    pub toggles: Toggles,
    pub model: ModelConfig,
    pub train: TrainConfig,
    pub blocks: Vec<BlockInfo>,
    pub rng: RngState,
    /// Completed epochs.
    pub epoch: usize,
    pub adam_step: u64,
    /// Validation mean F1 after `epoch`, when measured.
    pub val_fm: Option<f64>,
    pub dataset: Option<DatasetInfo>,
}

/// Everything needed to resume training or run inference.
#[derive(Clone, Debug, PartialEq)]
pub struct Checkpoint {
    pub header: CheckpointHeader,
    pub params: ModelParams,
    pub optimizer: OptimizerState,
}

fn corrupt(msg: impl Into<String>) -> TrainError {
    TrainError::Checkpoint(msg.into())
}

impl Checkpoint {
    /// Checks that toggles, configurations and blocks agree with each other.
    pub fn validate(&self) -> Result<(), TrainError> {
        let h = &self.header;
        if h.model.toggles != h.toggles || h.train.toggles != h.toggles {
            return Err(TrainError::Config(format!(
                "checkpoint toggles disagree: header {:?}, model {:?}, training {:?}",
                h.toggles, h.model.toggles, h.train.toggles
            )));
        }
        let geometry = (h.model.window, h.model.feature_maps, h.model.hidden, h.model.cie_bias);
        let train_geometry = (h.train.window, h.train.feature_maps, h.train.hidden, h.train.cie_bias);
        if geometry != train_geometry {
            return Err(TrainError::Config(
                "checkpoint model geometry disagrees with its training configuration".into(),
            ));
        }
        if self.params.config() != &h.model {
            return Err(TrainError::Config("parameters were built for another model configuration".into()));
        }
        Ok(())
    }

    pub fn to_bytes(&self) -> Result<Vec<u8>, TrainError> {
        self.validate()?;
        let header = serde_json::to_vec(&self.header).map_err(|e| corrupt(e.to_string()))?;
        let scalars = self.params.num_parameters();
        let mut out = Vec::with_capacity(20 + header.len() + 24 * scalars);
        out.extend_from_slice(MAGIC);
        out.extend_from_slice(&FORMAT_VERSION.to_le_bytes());
        out.extend_from_slice(&(header.len() as u64).to_le_bytes());
        out.extend_from_slice(&header);
        let tensors = self
            .params
            .blocks()
            .iter()
            .map(|b| &b.value)
            .chain(&self.optimizer.m)
            .chain(&self.optimizer.v);
        for t in tensors {
            for v in t.data() {
                out.extend_from_slice(&v.to_le_bytes());
            }
        }
        Ok(out)
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self, TrainError> {
        let mut rest = bytes;
        let mut take = |n: usize, what: &str| -> Result<&[u8], TrainError> {
            if rest.len() < n {
                return Err(corrupt(format!("truncated checkpoint: missing {what}")));
            }
            let (head, tail) = rest.split_at(n);
            rest = tail;
            Ok(head)
        };
        if take(8, "magic")? != MAGIC {
            return Err(corrupt("not a checkpoint file (bad magic)"));
        }
        let version = u32::from_le_bytes(take(4, "version")?.try_into().expect("4 bytes"));
        if version != FORMAT_VERSION {
            return Err(corrupt(format!(
                "unsupported checkpoint version {version} (expected {FORMAT_VERSION})"
            )));
        }
        let header_len = u64::from_le_bytes(take(8, "header length")?.try_into().expect("8 bytes"));
        let header_len = usize::try_from(header_len).map_err(|_| corrupt("header length overflows"))?;
        let header: CheckpointHeader =
            serde_json::from_slice(take(header_len, "header")?).map_err(|e| corrupt(format!("header: {e}")))?;

        let mut read_tensor = |shape: &[usize], what: &str| -> Result<Tensor, TrainError> {
            let n: usize = shape.iter().product();
            let raw = take(n * 8, what)?;
            let data = raw
                .chunks_exact(8)
                .map(|c| f64::from_le_bytes(c.try_into().expect("8 bytes")))
                .collect();
            Ok(Tensor::new(shape.to_vec(), data)?)
        };
        let mut blocks = Vec::with_capacity(header.blocks.len());
        for b in &header.blocks {
            blocks.push(ParamBlock {
                name: b.name.clone(),
                value: read_tensor(&b.shape, "parameters")?,
            });
        }
        let m = header
            .blocks
            .iter()
            .map(|b| read_tensor(&b.shape, "first moments"))
            .collect::<Result<Vec<_>, _>>()?;
        let v = header
            .blocks
            .iter()
            .map(|b| read_tensor(&b.shape, "second moments"))
            .collect::<Result<Vec<_>, _>>()?;
        if !rest.is_empty() {
            return Err(corrupt(format!("{} trailing bytes after the last block", rest.len())));
        }
        let params = ModelParams::from_blocks(&header.model, blocks)?;
        let ckpt = Self {
            optimizer: OptimizerState {
                step: header.adam_step,
                m,
                v,
            },
            header,
            params,
        };
        ckpt.validate()?;
        Ok(ckpt)
    }

    pub fn save(&self, path: &Path) -> Result<(), TrainError> {
        let bytes = self.to_bytes()?;
        std::fs::write(path, bytes).map_err(|e| TrainError::Io(format!("{}: {e}", path.display())))
    }

    pub fn load(path: &Path) -> Result<Self, TrainError> {
        let bytes = std::fs::read(path).map_err(|e| TrainError::Io(format!("{}: {e}", path.display())))?;
        Self::from_bytes(&bytes).map_err(|e| match e {
            TrainError::Checkpoint(msg) => TrainError::Checkpoint(format!("{}: {msg}", path.display())),
            other => other,
        })
    }
}

pub(crate) fn block_infos(params: &ModelParams) -> Vec<BlockInfo> {
    params
        .blocks()
        .iter()
        .map(|b| BlockInfo {
            name: b.name.clone(),
            shape: b.value.shape().to_vec(),
        })
        .collect()
}
