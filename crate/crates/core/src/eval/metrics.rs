use serde::{Deserialize, Serialize};

use super::EvalError;

/// Square confusion matrix; rows are truth, columns are predictions.
pub fn confusion_matrix(truth: &[usize], pred: &[usize], num_classes: usize) -> Result<Vec<Vec<u64>>, EvalError> {
    if truth.len() != pred.len() {
        return Err(EvalError::LengthMismatch {
            truth: truth.len(),
            pred: pred.len(),
        });
    }
    let mut m = vec![vec![0u64; num_classes]; num_classes];
    for (&t, &p) in truth.iter().zip(pred) {
        if t >= num_classes || p >= num_classes {
            return Err(EvalError::InvalidLabel(t.max(p)));
        }
        m[t][p] += 1;
    }
    Ok(m)
}

/// Per-class scores derived from a confusion matrix.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ClassMetrics {
    pub precision: Vec<f64>,
    pub recall: Vec<f64>,
    pub f1: Vec<f64>,
    /// Truth frames per class.
    pub support: Vec<u64>,
}

fn ratio(num: u64, den: u64) -> f64 {
    if den == 0 {
        0.0
    } else {
        num as f64 / den as f64
    }
}

impl ClassMetrics {
    pub fn from_confusion(confusion: &[Vec<u64>]) -> Self {
        let c = confusion.len();
        let mut out = Self {
            precision: vec![0.0; c],
            recall: vec![0.0; c],
            f1: vec![0.0; c],
            support: vec![0; c],
        };
        for k in 0..c {
            let tp = confusion[k][k];
            let row: u64 = confusion[k].iter().sum();
            let col: u64 = confusion.iter().map(|r| r[k]).sum();
            let p = ratio(tp, col);
            let r = ratio(tp, row);
            out.precision[k] = p;
            out.recall[k] = r;
            out.f1[k] = if p + r == 0.0 { 0.0 } else { 2.0 * p * r / (p + r) };
            out.support[k] = row;
        }
        out
    }

    /// Mean F1 over all classes, or over all but `exclude`.
    pub fn mean_f1(&self, exclude: Option<usize>) -> f64 {
        let kept: Vec<f64> = self
            .f1
            .iter()
            .enumerate()
            .filter(|&(k, _)| Some(k) != exclude)
            .map(|(_, &f)| f)
            .collect();
        if kept.is_empty() {
            0.0
        } else {
            kept.iter().sum::<f64>() / kept.len() as f64
        }
    }
}

/// Macro F1 of two label streams over `num_classes` classes. Classes that
/// never occur in either stream score 0.
pub fn mean_f1(truth: &[usize], pred: &[usize], num_classes: usize) -> Result<f64, EvalError> {
    let m = confusion_matrix(truth, pred, num_classes)?;
    Ok(ClassMetrics::from_confusion(&m).mean_f1(None))
}
