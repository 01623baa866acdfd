//! The network: a per-channel convolutional backbone, cross-channel
//! self-attention, a two-layer attentional GRU and a linear classifier.

mod export;
mod network;
mod params;

pub use export::{
    attention_file_name, export_attention, load_attention, load_temporal, AttentionMatrices, TemporalRow,
    TEMPORAL_FILE,
};
pub use network::{
    age_forward, backbone_forward, cie_forward, classify, gru_layer, model_forward, vectorize, Forward,
    ForwardOptions, ForwardTrace,
};
pub use params::{layout, Bound, ModelParams, ParamBlock, CIE_EMBEDDINGS, GRU_LAYERS};

use thiserror::Error;

use crate::tensor::TensorError;

#[derive(Debug, Error)]
pub enum ModelError {
    #[error("configuration error: {0}")]
    Config(String),
    #[error(transparent)]
    Tensor(#[from] TensorError),
    #[error("unavailable: {0}")]
    Unavailable(String),
    #[error("i/o error: {0}")]
    Io(String),
    #[error("malformed file: {0}")]
    Format(String),
}
