//! Activity recognition from wearable sensor windows.
//!
//! A per-channel convolutional backbone feeds an optional cross-channel
//! self-attention encoder and a two-layer GRU whose states are pooled by
//! learned temporal attention. Training combines cross-entropy with an
//! optional center loss on mixup-augmented batches. Evaluation predicts one
//! label per sample and reports mean F1 and a frame-level error taxonomy.
//!
//! Everything runs in `f64` on a small reverse-mode [`tensor::Tape`].

pub mod config;
pub mod data;
pub mod eval;
pub mod model;
pub mod objective;
pub mod rng;
pub mod tensor;
pub mod trainer;
