//! CSV export of channel and temporal attention for selected windows.
//!
//! `attention_s{sequence}_{start}.csv` holds one `D×D` block per time-step
//! (`t,row,c0,…`) followed by their mean (`t = mean`).
//! `temporal_attention.csv` holds one `β` row per window.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::{ForwardTrace, ModelError};
use crate::data::Origin;

/// Attention matrices of one window as read back from disk.
#[derive(Clone, Debug, PartialEq)]
pub struct AttentionMatrices {
    /// `steps[t][row][col]`.
    pub steps: Vec<Vec<Vec<f64>>>,
    /// Mean over time-steps.
    pub mean: Vec<Vec<f64>>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TemporalRow {
    /// Position of the window in the exported batch.
    pub window: usize,
    pub origin: Origin,
    pub beta: Vec<f64>,
}

fn csv_err(path: &Path, e: impl std::fmt::Display) -> ModelError {
    ModelError::Io(format!("{}: {e}", path.display()))
}

pub fn attention_file_name(origin: Origin) -> String {
    format!("attention_s{}_{}.csv", origin.sequence, origin.start)
}

pub const TEMPORAL_FILE: &str = "temporal_attention.csv";

/// Writes attention for the windows at `selected` (indices into the traced
/// batch, whose origins are `origins`). Returns the files written.
///
/// Fails when the trace carries neither kind of attention.
pub fn export_attention(
    trace: &ForwardTrace,
    origins: &[Origin],
    selected: &[usize],
    dir: &Path,
) -> Result<Vec<PathBuf>, ModelError> {
    if trace.attention.is_none() && trace.beta.is_none() {
        return Err(ModelError::Unavailable(
            "attention export needs a model with the cross-channel encoder or recurrent attention enabled".into(),
        ));
    }
    let batch = trace.logits.shape()[0];
    if origins.len() != batch {
        return Err(ModelError::Config(format!(
            "{} origins for a batch of {batch} windows",
            origins.len()
        )));
    }
    if let Some(&bad) = selected.iter().find(|&&i| i >= batch) {
        return Err(ModelError::Config(format!("window {bad} outside a batch of {batch}")));
    }
    if selected.is_empty() {
        return Ok(Vec::new());
    }
    std::fs::create_dir_all(dir).map_err(|e| csv_err(dir, e))?;
    let mut written = Vec::new();

    if let Some(att) = &trace.attention {
        let (t_len, d) = (att.shape()[1], att.shape()[2]);
        for &i in selected {
            let path = dir.join(attention_file_name(origins[i]));
            let mut w = csv::Writer::from_path(&path).map_err(|e| csv_err(&path, e))?;
            let mut header = vec!["t".to_string(), "row".to_string()];
            header.extend((0..d).map(|c| format!("c{c}")));
            w.write_record(&header).map_err(|e| csv_err(&path, e))?;
            let mut mean = vec![0.0; d * d];
            for t in 0..t_len {
                let block = &att.data()[((i * t_len + t) * d * d)..][..d * d];
                for (m, &v) in mean.iter_mut().zip(block) {
                    *m += v / t_len as f64;
                }
                for row in 0..d {
                    let mut rec = vec![t.to_string(), row.to_string()];
                    rec.extend(block[row * d..(row + 1) * d].iter().map(f64::to_string));
                    w.write_record(&rec).map_err(|e| csv_err(&path, e))?;
                }
            }
            for row in 0..d {
                let mut rec = vec!["mean".to_string(), row.to_string()];
                rec.extend(mean[row * d..(row + 1) * d].iter().map(f64::to_string));
                w.write_record(&rec).map_err(|e| csv_err(&path, e))?;
            }
            w.flush().map_err(|e| csv_err(&path, e))?;
            written.push(path);
        }
    }

    if let Some(beta) = &trace.beta {
        let t_len = beta.shape()[1];
        let path = dir.join(TEMPORAL_FILE);
        let mut w = csv::Writer::from_path(&path).map_err(|e| csv_err(&path, e))?;
        let mut header = vec!["window".to_string(), "sequence".to_string(), "start".to_string()];
        header.extend((0..t_len).map(|t| format!("beta_{t}")));
        w.write_record(&header).map_err(|e| csv_err(&path, e))?;
        for &i in selected {
            let mut rec = vec![i.to_string(), origins[i].sequence.to_string(), origins[i].start.to_string()];
            rec.extend(beta.data()[i * t_len..(i + 1) * t_len].iter().map(f64::to_string));
            w.write_record(&rec).map_err(|e| csv_err(&path, e))?;
        }
        w.flush().map_err(|e| csv_err(&path, e))?;
        written.push(path);
    }
    Ok(written)
}

fn parse<T: std::str::FromStr>(path: &Path, field: &str) -> Result<T, ModelError> {
    field
        .parse()
        .map_err(|_| ModelError::Format(format!("{}: malformed field `{field}`", path.display())))
}

/// Reads a file written by [`export_attention`] for one window.
pub fn load_attention(path: &Path) -> Result<AttentionMatrices, ModelError> {
    let mut r = csv::Reader::from_path(path).map_err(|e| csv_err(path, e))?;
    let mut steps: Vec<Vec<Vec<f64>>> = Vec::new();
    let mut mean = Vec::new();
    for rec in r.records() {
        let rec = rec.map_err(|e| csv_err(path, e))?;
        let values = rec
            .iter()
            .skip(2)
            .map(|f| parse::<f64>(path, f))
            .collect::<Result<Vec<_>, _>>()?;
        match rec.get(0) {
            Some("mean") => mean.push(values),
            Some(t) => {
                let t: usize = parse(path, t)?;
                if t == steps.len() {
                    steps.push(Vec::new());
                }
                steps
                    .get_mut(t)
                    .ok_or_else(|| ModelError::Format(format!("{}: time-steps out of order", path.display())))?
                    .push(values);
            }
            None => return Err(ModelError::Format(format!("{}: empty record", path.display()))),
        }
    }
    Ok(AttentionMatrices { steps, mean })
}

/// Reads [`TEMPORAL_FILE`].
pub fn load_temporal(path: &Path) -> Result<Vec<TemporalRow>, ModelError> {
    let mut r = csv::Reader::from_path(path).map_err(|e| csv_err(path, e))?;
    let mut rows = Vec::new();
    for rec in r.records() {
        let rec = rec.map_err(|e| csv_err(path, e))?;
        if rec.len() < 3 {
            return Err(ModelError::Format(format!("{}: short record", path.display())));
        }
        rows.push(TemporalRow {
            window: parse(path, &rec[0])?,
            origin: Origin {
                sequence: parse(path, &rec[1])?,
                start: parse(path, &rec[2])?,
            },
            beta: rec.iter().skip(3).map(|f| parse(path, f)).collect::<Result<_, _>>()?,
        });
    }
    Ok(rows)
}
