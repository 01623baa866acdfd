//! Separable synthetic recordings: each class drives every channel with a
//! sinusoid of a class-specific frequency, random phase and additive
//! Gaussian noise.

use std::f64::consts::TAU;
use std::path::{Path, PathBuf};

use rand::Rng;
use rand_distr::{Distribution, Normal};

use super::{
    one_hot, write_sequence, DataError, DatasetManifest, LabelSpace, Origin, RecordingEntry, Segment, SensorSequence,
    Split,
};
use crate::tensor::Tensor;

#[derive(Clone, Debug, PartialEq)]
pub struct SyntheticConfig {
    pub classes: usize,
    pub channels: usize,
    pub window: usize,
    pub noise_std: f64,
    pub sample_rate_hz: f64,
}

impl Default for SyntheticConfig {
    fn default() -> Self {
        Self {
            classes: 3,
            channels: 6,
            window: 24,
            noise_std: 0.3,
            sample_rate_hz: 33.0,
        }
    }
}

impl SyntheticConfig {
    /// Cycles per sample of `class` on `channel`.
    pub fn frequency(&self, class: usize, channel: usize) -> f64 {
        let cycles_per_window = 1.0 + 1.5 * class as f64;
        cycles_per_window / self.window as f64 * (1.0 + 0.08 * channel as f64)
    }

    pub fn label_space(&self) -> LabelSpace {
        let mut names = vec!["Null".to_string()];
        names.extend((1..self.classes).map(|c| format!("act{c}")));
        LabelSpace::new(names, Some("Null")).expect("distinct names")
    }

    fn channel_names(&self) -> Vec<String> {
        (0..self.channels).map(|d| format!("ch{d}")).collect()
    }

    /// `len` samples of `class` with fresh random phases.
    fn block<R: Rng + ?Sized>(&self, class: usize, len: usize, rng: &mut R) -> Vec<Vec<f64>> {
        let noise = Normal::new(0.0, self.noise_std).expect("finite noise");
        (0..self.channels)
            .map(|d| {
                let f = self.frequency(class, d);
                let phase = rng.random::<f64>() * TAU;
                (0..len)
                    .map(|t| (TAU * f * t as f64 + phase).sin() + noise.sample(rng))
                    .collect()
            })
            .collect()
    }
}

/// `count` windows with classes assigned round-robin. Origins record the
/// class as `sequence` and the draw index as `start`.
pub fn windows<R: Rng + ?Sized>(cfg: &SyntheticConfig, count: usize, rng: &mut R) -> Vec<Segment> {
    (0..count)
        .map(|i| {
            let class = i % cfg.classes;
            let data = cfg.block(class, cfg.window, rng).concat();
            Segment {
                window: Tensor::new(vec![cfg.channels, cfg.window], data).expect("window shape"),
                label: one_hot(class, cfg.classes),
                origin: Origin {
                    sequence: class,
                    start: i,
                },
            }
        })
        .collect()
}

/// A continuous recording made of consecutive `(class, length)` blocks.
pub fn sequence<R: Rng + ?Sized>(
    cfg: &SyntheticConfig,
    id: &str,
    blocks: &[(usize, usize)],
    rng: &mut R,
) -> SensorSequence {
    let mut channels = vec![Vec::new(); cfg.channels];
    let mut labels = Vec::new();
    for &(class, len) in blocks {
        for (dst, src) in channels.iter_mut().zip(cfg.block(class, len, rng)) {
            dst.extend(src);
        }
        labels.extend(std::iter::repeat_n(class, len));
    }
    SensorSequence::new(
        id,
        cfg.sample_rate_hz,
        cfg.channel_names(),
        channels.concat(),
        labels,
        cfg.classes,
    )
    .expect("consistent synthetic sequence")
}

/// Writes one CSV per recording plus `manifest.json` into `dir`. Every
/// recording cycles through all classes in blocks of `block_len` samples.
pub fn write_dataset<R: Rng + ?Sized>(
    dir: &Path,
    cfg: &SyntheticConfig,
    recordings_per_split: &[(Split, usize)],
    block_len: usize,
    rng: &mut R,
) -> Result<PathBuf, DataError> {
    std::fs::create_dir_all(dir).map_err(|source| DataError::Io {
        path: dir.to_path_buf(),
        source,
    })?;
    let labels = cfg.label_space();
    let mut entries = Vec::new();
    for &(split, count) in recordings_per_split {
        for r in 0..count {
            let blocks: Vec<(usize, usize)> = (0..cfg.classes).map(|c| ((c + r) % cfg.classes, block_len)).collect();
            let name = format!("{split}_{r}.csv");
            let seq = sequence(cfg, &name, &blocks, rng);
            write_sequence(&dir.join(&name), &seq, &labels)?;
            entries.push(RecordingEntry {
                path: name.into(),
                split,
                subject: Some(format!("{split}{r}")),
                run: None,
                sample_rate_hz: None,
            });
        }
    }
    let manifest = DatasetManifest {
        labels: labels.names().to_vec(),
        null_label: Some("Null".into()),
        sample_rate_hz: cfg.sample_rate_hz,
        target_rate_hz: None,
        channels: None,
        label_column: "label".into(),
        recordings: entries,
        base_dir: dir.to_path_buf(),
    };
    let path = dir.join("manifest.json");
    let text = serde_json::to_string_pretty(&manifest).map_err(|e| DataError::Manifest(e.to_string()))?;
    std::fs::write(&path, text).map_err(|source| DataError::Io {
        path: path.clone(),
        source,
    })?;
    Ok(path)
}
