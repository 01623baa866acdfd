use serde::{Deserialize, Serialize};

use super::{one_hot, DataError, LabelSpace, Origin, Segment, SensorSequence};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct WindowConfig {
    pub width: usize,
    /// Fraction of a window shared with its successor, in `[0, 1)`.
    pub overlap: f64,
    /// Skip windows whose majority label is the Null class.
    #[serde(default)]
    pub drop_null: bool,
}

impl WindowConfig {
    pub fn new(width: usize, overlap: f64) -> Self {
        Self {
            width,
            overlap,
            drop_null: false,
        }
    }

    /// `width · (1 − overlap)`, which must be a positive integer.
    pub fn stride(&self) -> Result<usize, DataError> {
        if !(0.0..1.0).contains(&self.overlap) {
            return Err(DataError::InvalidParameter(format!(
                "overlap {} outside [0, 1)",
                self.overlap
            )));
        }
        if self.width == 0 {
            return Err(DataError::InvalidParameter("window width must be positive".into()));
        }
        let stride = self.width as f64 * (1.0 - self.overlap);
        let rounded = stride.round();
        if (stride - rounded).abs() > 1e-9 || rounded < 1.0 {
            return Err(DataError::InvalidParameter(format!(
                "stride {stride} (width {} × (1 − {})) is not a positive integer",
                self.width, self.overlap
            )));
        }
        Ok(rounded as usize)
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum WindowWarning {
    SequenceTooShort { sequence: usize, len: usize, width: usize },
}

#[derive(Clone, Debug, Default)]
pub struct Segmentation {
    pub segments: Vec<Segment>,
    pub warnings: Vec<WindowWarning>,
}

/// Majority label of a window. Ties go to the tied label whose last
/// occurrence is latest.
pub fn majority_label(labels: &[usize], num_classes: usize) -> usize {
    let mut counts = vec![0usize; num_classes];
    for &l in labels {
        counts[l] += 1;
    }
    let top = counts.iter().copied().max().unwrap_or(0);
    labels
        .iter()
        .rev()
        .copied()
        .find(|&l| counts[l] == top)
        .unwrap_or(0)
}

/// Sliding windows at `0, stride, 2·stride, …` with the last start at most
/// `len − width`. Each window carries its one-hot majority label.
pub fn segment(
    seq: &SensorSequence,
    sequence_index: usize,
    cfg: &WindowConfig,
    labels: &LabelSpace,
) -> Result<Segmentation, DataError> {
    let stride = cfg.stride()?;
    let mut out = Segmentation::default();
    let n = seq.len();
    if n < cfg.width {
        log::warn!(
            "sequence {} ({}) has {n} samples, fewer than the window width {}; no windows cut",
            sequence_index,
            seq.id,
            cfg.width
        );
        out.warnings.push(WindowWarning::SequenceTooShort {
            sequence: sequence_index,
            len: n,
            width: cfg.width,
        });
        return Ok(out);
    }
    let classes = labels.num_classes();
    for start in (0..=n - cfg.width).step_by(stride) {
        let label = majority_label(&seq.labels()[start..start + cfg.width], classes);
        if cfg.drop_null && Some(label) == labels.null_index() {
            continue;
        }
        out.segments.push(Segment {
            window: seq.window(start, cfg.width),
            label: one_hot(label, classes),
            origin: Origin {
                sequence: sequence_index,
                start,
            },
        });
    }
    Ok(out)
}
