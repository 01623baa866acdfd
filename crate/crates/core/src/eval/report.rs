use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{confusion_matrix, misalignment, ClassMetrics, EvalError, Taxonomy, TAXONOMY_ROWS};
use crate::data::LabelSpace;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ClassScore {
    pub label: String,
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    pub support: u64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TaxonomyRow {
    pub category: String,
    pub frames: u64,
    /// Share of all frames, two decimals.
    pub percent: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TaxonomyReport {
    pub counts: Taxonomy,
    pub rows: Vec<TaxonomyRow>,
}

impl TaxonomyReport {
    pub fn new(counts: Taxonomy) -> Self {
        let frames = counts.rows();
        let pct = counts.percentages();
        let rows = TAXONOMY_ROWS
            .iter()
            .zip(frames.iter().zip(pct))
            .map(|(name, (&frames, percent))| TaxonomyRow {
                category: (*name).to_string(),
                frames,
                percent,
            })
            .collect();
        Self { counts, rows }
    }
}

/// Frame-level scores of one or more prediction streams.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub labels: Vec<String>,
    pub null_label: Option<String>,
    pub total_frames: u64,
    /// Rows are truth, columns are predictions.
    pub confusion: Vec<Vec<u64>>,
    pub per_class: Vec<ClassScore>,
    /// Headline mean F1, per `include_null_in_fm`.
    pub fm: f64,
    pub include_null_in_fm: bool,
    pub fm_all_classes: f64,
    /// Mean F1 over the non-Null classes, when a Null class exists.
    pub fm_without_null: Option<f64>,
    /// Error taxonomy, when a Null class exists.
    pub taxonomy: Option<TaxonomyReport>,
}

impl EvalReport {
    pub fn from_streams(
        truth: &[usize],
        pred: &[usize],
        labels: &LabelSpace,
        include_null_in_fm: bool,
    ) -> Result<Self, EvalError> {
        let confusion = confusion_matrix(truth, pred, labels.num_classes())?;
        let taxonomy = match labels.null_index() {
            Some(null) => Some(misalignment(truth, pred, Some(null))?),
            None => None,
        };
        Ok(Self::from_counts(confusion, taxonomy, labels, include_null_in_fm))
    }

    /// Builds the report from summed counts.
    pub fn from_counts(
        confusion: Vec<Vec<u64>>,
        taxonomy: Option<Taxonomy>,
        labels: &LabelSpace,
        include_null_in_fm: bool,
    ) -> Self {
        let m = ClassMetrics::from_confusion(&confusion);
        let per_class = labels
            .names()
            .iter()
            .enumerate()
            .map(|(k, name)| ClassScore {
                label: name.clone(),
                precision: m.precision[k],
                recall: m.recall[k],
                f1: m.f1[k],
                support: m.support[k],
            })
            .collect();
        let fm_all_classes = m.mean_f1(None);
        let fm_without_null = labels.null_index().map(|n| m.mean_f1(Some(n)));
        let fm = match (include_null_in_fm, fm_without_null) {
            (false, Some(v)) => v,
            _ => fm_all_classes,
        };
        Self {
            labels: labels.names().to_vec(),
            null_label: labels.null_index().map(|n| labels.name(n).to_string()),
            total_frames: confusion.iter().flatten().sum(),
            confusion,
            per_class,
            fm,
            include_null_in_fm,
            fm_all_classes,
            fm_without_null,
            taxonomy: taxonomy.map(TaxonomyReport::new),
        }
    }

    /// Pools frames of reports over the same label space.
    pub fn merge(reports: &[EvalReport], labels: &LabelSpace, include_null_in_fm: bool) -> Result<Self, EvalError> {
        let c = labels.num_classes();
        let mut confusion = vec![vec![0u64; c]; c];
        let mut taxonomy = labels.null_index().map(|_| Taxonomy::default());
        for r in reports {
            if r.labels != labels.names() {
                return Err(EvalError::Format("cannot merge reports over different label spaces".into()));
            }
            for (row, other) in confusion.iter_mut().zip(&r.confusion) {
                for (a, b) in row.iter_mut().zip(other) {
                    *a += b;
                }
            }
            if let (Some(t), Some(o)) = (taxonomy.as_mut(), r.taxonomy.as_ref()) {
                t.merge(&o.counts);
            }
        }
        Ok(Self::from_counts(confusion, taxonomy, labels, include_null_in_fm))
    }

    pub fn write_json(&self, path: &Path) -> Result<(), EvalError> {
        let text = serde_json::to_string_pretty(self).map_err(|e| EvalError::Format(e.to_string()))?;
        std::fs::write(path, text + "\n").map_err(|e| EvalError::io(path, e))
    }

    pub fn read_json(path: &Path) -> Result<Self, EvalError> {
        let text = std::fs::read_to_string(path).map_err(|e| EvalError::io(path, e))?;
        serde_json::from_str(&text).map_err(|e| EvalError::Format(format!("{}: {e}", path.display())))
    }

    /// Confusion matrix with a `truth\pred` corner cell and label headers.
    pub fn write_confusion_csv(&self, path: &Path) -> Result<(), EvalError> {
        let mut w = csv::Writer::from_path(path).map_err(|e| EvalError::io(path, e))?;
        let mut header = vec!["truth\\pred".to_string()];
        header.extend(self.labels.iter().cloned());
        w.write_record(&header).map_err(|e| EvalError::io(path, e))?;
        for (name, row) in self.labels.iter().zip(&self.confusion) {
            let mut rec = vec![name.clone()];
            rec.extend(row.iter().map(u64::to_string));
            w.write_record(&rec).map_err(|e| EvalError::io(path, e))?;
        }
        w.flush().map_err(|e| EvalError::io(path, e))
    }

    pub fn read_confusion_csv(path: &Path) -> Result<(Vec<String>, Vec<Vec<u64>>), EvalError> {
        let mut r = csv::Reader::from_path(path).map_err(|e| EvalError::io(path, e))?;
        let labels: Vec<String> = r
            .headers()
            .map_err(|e| EvalError::io(path, e))?
            .iter()
            .skip(1)
            .map(str::to_string)
            .collect();
        let mut rows = Vec::new();
        for rec in r.records() {
            let rec = rec.map_err(|e| EvalError::io(path, e))?;
            let row = rec
                .iter()
                .skip(1)
                .map(|f| f.parse::<u64>().map_err(|_| EvalError::Format(format!("bad count `{f}`"))))
                .collect::<Result<Vec<_>, _>>()?;
            rows.push(row);
        }
        Ok((labels, rows))
    }

    /// Human-readable summary.
    pub fn summary(&self) -> String {
        let mut s = format!("frames: {}\nF_m: {:.4}", self.total_frames, self.fm);
        if let Some(v) = self.fm_without_null {
            s += &format!(" (all classes {:.4}, without Null {:.4})", self.fm_all_classes, v);
        }
        s.push('\n');
        for c in &self.per_class {
            s += &format!(
                "  {:<16} P {:.4}  R {:.4}  F1 {:.4}  n={}\n",
                c.label, c.precision, c.recall, c.f1, c.support
            );
        }
        if let Some(t) = &self.taxonomy {
            for row in &t.rows {
                s += &format!("  {:<20} {:>10} {:>7.2}%\n", row.category, row.frames, row.percent);
            }
        }
        s
    }
}

/// Writes `index,truth,pred` rows using label names.
pub fn write_predictions(path: &Path, truth: &[usize], pred: &[usize], labels: &LabelSpace) -> Result<(), EvalError> {
    if truth.len() != pred.len() {
        return Err(EvalError::LengthMismatch {
            truth: truth.len(),
            pred: pred.len(),
        });
    }
    let mut w = csv::Writer::from_path(path).map_err(|e| EvalError::io(path, e))?;
    w.write_record(["index", "truth", "pred"]).map_err(|e| EvalError::io(path, e))?;
    for (i, (&t, &p)) in truth.iter().zip(pred).enumerate() {
        w.write_record([i.to_string().as_str(), labels.name(t), labels.name(p)])
            .map_err(|e| EvalError::io(path, e))?;
    }
    w.flush().map_err(|e| EvalError::io(path, e))
}

/// Reads one label stream from a CSV file: the first of `columns` present in
/// the header, else the last column.
pub fn read_label_column(path: &Path, columns: &[&str], labels: &LabelSpace) -> Result<Vec<usize>, EvalError> {
    let mut r = csv::ReaderBuilder::new()
        .trim(csv::Trim::All)
        .from_path(path)
        .map_err(|e| EvalError::io(path, e))?;
    let header = r.headers().map_err(|e| EvalError::io(path, e))?.clone();
    let col = columns
        .iter()
        .find_map(|c| header.iter().position(|h| h == *c))
        .or_else(|| header.len().checked_sub(1))
        .ok_or_else(|| EvalError::Format(format!("{}: empty header", path.display())))?;
    let mut out = Vec::new();
    for rec in r.records() {
        let rec = rec.map_err(|e| EvalError::io(path, e))?;
        let line = rec.position().map(|p| p.line()).unwrap_or(0);
        let token = rec.get(col).unwrap_or("");
        let id = labels.index_of(token).ok_or_else(|| EvalError::UnknownLabel {
            path: path.to_path_buf(),
            line,
            token: token.to_string(),
        })?;
        out.push(id);
    }
    Ok(out)
}
