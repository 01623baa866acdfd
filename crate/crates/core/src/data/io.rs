use std::fs::File;
use std::path::Path;

use super::{DataError, LabelSpace, SensorSequence};

/// Which CSV columns hold channels and labels.
#[derive(Clone, Debug)]
pub struct SequenceSchema {
    /// Channel columns in model order; `None` takes every non-label column.
    pub channels: Option<Vec<String>>,
    pub label_column: String,
    pub sample_rate_hz: f64,
}

impl SequenceSchema {
    pub fn new(sample_rate_hz: f64) -> Self {
        Self {
            channels: None,
            label_column: "label".into(),
            sample_rate_hz,
        }
    }
}

/// Reads one recording: a header row naming the channels and the label
/// column, then one sample per line. Row order is preserved.
pub fn load_sequence(
    path: &Path,
    schema: &SequenceSchema,
    labels: &LabelSpace,
) -> Result<SensorSequence, DataError> {
    let file = File::open(path).map_err(|source| DataError::Io {
        path: path.to_path_buf(),
        source,
    })?;
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .flexible(true)
        .trim(csv::Trim::All)
        .from_reader(file);
    let parse_err = |line: u64, message: String| DataError::Parse {
        path: path.to_path_buf(),
        line,
        message,
    };
    let header = reader.headers().map_err(|e| parse_err(1, e.to_string()))?.clone();
    let label_col = header
        .iter()
        .position(|h| h == schema.label_column)
        .ok_or_else(|| parse_err(1, format!("missing label column `{}`", schema.label_column)))?;
    let channel_cols: Vec<usize> = match &schema.channels {
        Some(names) => names
            .iter()
            .map(|n| {
                header
                    .iter()
                    .position(|h| h == n)
                    .ok_or_else(|| parse_err(1, format!("missing channel column `{n}`")))
            })
            .collect::<Result<_, _>>()?,
        None => (0..header.len()).filter(|&i| i != label_col).collect(),
    };
    if channel_cols.is_empty() {
        return Err(parse_err(1, "no channel columns".into()));
    }
    let channel_names: Vec<String> = channel_cols.iter().map(|&i| header[i].to_string()).collect();

    let mut columns: Vec<Vec<f64>> = vec![Vec::new(); channel_cols.len()];
    let mut label_ids = Vec::new();
    for record in reader.records() {
        let record = record.map_err(|e| {
            let line = e.position().map(|p| p.line()).unwrap_or(0);
            parse_err(line, e.to_string())
        })?;
        let line = record.position().map(|p| p.line()).unwrap_or(0);
        if record.len() != header.len() {
            return Err(parse_err(
                line,
                format!("expected {} fields, found {}", header.len(), record.len()),
            ));
        }
        for (col, &i) in columns.iter_mut().zip(&channel_cols) {
            let field = &record[i];
            let v: f64 = field
                .parse()
                .ok()
                .filter(|v: &f64| v.is_finite())
                .ok_or_else(|| parse_err(line, format!("non-numeric value `{field}` in column `{}`", &header[i])))?;
            col.push(v);
        }
        let token = &record[label_col];
        let id = labels.index_of(token).ok_or_else(|| DataError::UnknownLabel {
            path: path.to_path_buf(),
            line,
            token: token.to_string(),
        })?;
        label_ids.push(id);
    }
    let id = path
        .file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_default();
    SensorSequence::new(
        id,
        schema.sample_rate_hz,
        channel_names,
        columns.concat(),
        label_ids,
        labels.num_classes(),
    )
}

/// Writes a recording in the format [`load_sequence`] reads. Values use the
/// shortest representation that parses back to the same `f64`.
pub fn write_sequence(path: &Path, seq: &SensorSequence, labels: &LabelSpace) -> Result<(), DataError> {
    let io_err = |e: csv::Error| DataError::Io {
        path: path.to_path_buf(),
        source: std::io::Error::other(e.to_string()),
    };
    let mut writer = csv::Writer::from_path(path).map_err(io_err)?;
    let mut header = seq.channel_names.clone();
    header.push("label".into());
    writer.write_record(&header).map_err(io_err)?;
    for n in 0..seq.len() {
        let mut row: Vec<String> = (0..seq.channels()).map(|d| seq.value(d, n).to_string()).collect();
        row.push(labels.name(seq.labels()[n]).to_string());
        writer.write_record(&row).map_err(io_err)?;
    }
    writer.flush().map_err(|source| DataError::Io {
        path: path.to_path_buf(),
        source,
    })
}
