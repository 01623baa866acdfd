use serde::{Deserialize, Serialize};

use super::{DataError, SensorSequence};

/// Channels whose standard deviation falls below this are only centered.
pub const STD_GUARD: f64 = 1e-8;

/// Largest distance of the rate ratio from an integer that still counts as
/// an integer decimation factor.
const RATIO_TOLERANCE: f64 = 0.02;

/// Integer-factor decimation: keeps every `r`-th sample and its label, where
/// `r = round(rate / target)`. Trailing samples that do not fill a complete
/// group of `r` are dropped. No anti-alias filtering is applied.
pub fn resample(seq: &SensorSequence, target_hz: f64) -> Result<SensorSequence, DataError> {
    let from = seq.sample_rate_hz;
    let fail = |reason: String| DataError::Resample {
        from,
        to: target_hz,
        reason,
    };
    if !(target_hz > 0.0 && target_hz.is_finite()) {
        return Err(fail("target rate must be positive".into()));
    }
    if target_hz > from {
        return Err(fail("upsampling is not supported".into()));
    }
    let ratio = from / target_hz;
    let factor = ratio.round();
    if (ratio - factor).abs() > RATIO_TOLERANCE {
        return Err(fail(format!("rate ratio {ratio:.4} is not an integer")));
    }
    let r = factor as usize;
    if r == 1 {
        return Ok(seq.clone());
    }
    let kept = seq.len() / r;
    let mut values = Vec::with_capacity(kept * seq.channels());
    for d in 0..seq.channels() {
        values.extend(seq.channel(d).iter().step_by(r).take(kept));
    }
    let labels = seq.labels().iter().step_by(r).take(kept).copied().collect();
    Ok(seq.with_values(values, labels, from / factor))
}

/// Per-channel mean and population standard deviation of the training pool.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NormalizationStats {
    pub mean: Vec<f64>,
    pub std: Vec<f64>,
}

impl NormalizationStats {
    pub fn channels(&self) -> usize {
        self.mean.len()
    }
}

pub fn fit_stats(train: &[SensorSequence]) -> Result<NormalizationStats, DataError> {
    let first = train
        .first()
        .ok_or_else(|| DataError::InvalidParameter("no training sequences to fit statistics on".into()))?;
    let d = first.channels();
    if let Some(bad) = train.iter().find(|s| s.channels() != d) {
        return Err(DataError::ChannelMismatch {
            expected: d,
            got: bad.channels(),
        });
    }
    let count: usize = train.iter().map(SensorSequence::len).sum();
    if count == 0 {
        return Err(DataError::InvalidParameter("training sequences hold no samples".into()));
    }
    let n = count as f64;
    let mut mean = vec![0.0; d];
    let mut std = vec![0.0; d];
    for c in 0..d {
        let m = train.iter().flat_map(|s| s.channel(c)).sum::<f64>() / n;
        let var = train
            .iter()
            .flat_map(|s| s.channel(c))
            .map(|v| (v - m) * (v - m))
            .sum::<f64>()
            / n;
        mean[c] = m;
        std[c] = var.sqrt();
    }
    Ok(NormalizationStats { mean, std })
}

/// `(x − mean) / std` per channel, with the divisor replaced by 1 for
/// near-constant channels.
pub fn apply_stats(seq: &SensorSequence, stats: &NormalizationStats) -> Result<SensorSequence, DataError> {
    if stats.channels() != seq.channels() {
        return Err(DataError::ChannelMismatch {
            expected: stats.channels(),
            got: seq.channels(),
        });
    }
    let mut values = Vec::with_capacity(seq.len() * seq.channels());
    for c in 0..seq.channels() {
        let m = stats.mean[c];
        let s = if stats.std[c] < STD_GUARD { 1.0 } else { stats.std[c] };
        values.extend(seq.channel(c).iter().map(|v| (v - m) / s));
    }
    Ok(seq.with_values(values, seq.labels().to_vec(), seq.sample_rate_hz))
}
