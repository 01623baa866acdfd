//! Frame-level error taxonomy for continuous recognition.
//!
//! Every frame falls in exactly one category:
//! - true positive: prediction equals truth (Null included);
//! - overfill: truth is Null, the prediction `X` belongs to a predicted run
//!   that overlaps a truth run of `X`;
//! - insertion: truth is Null, any other non-Null prediction;
//! - underfill: prediction is Null, the truth run of `Y` has at least one
//!   frame predicted as `Y`;
//! - deletion: prediction is Null, any other non-Null truth;
//! - substitution: truth and prediction are different non-Null labels.

use serde::{Deserialize, Serialize};

use super::EvalError;

/// A maximal stretch `[start, end)` of one label.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Run {
    pub label: usize,
    pub start: usize,
    pub end: usize,
}

/// Maximal constant runs; adjacent runs differ in label and together they
/// tile the stream.
pub fn runs(stream: &[usize]) -> Vec<Run> {
    let mut out: Vec<Run> = Vec::new();
    for (i, &l) in stream.iter().enumerate() {
        match out.last_mut() {
            Some(r) if r.label == l => r.end = i + 1,
            _ => out.push(Run {
                label: l,
                start: i,
                end: i + 1,
            }),
        }
    }
    out
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Taxonomy {
    pub true_positive: u64,
    pub deletion: u64,
    pub insertion: u64,
    pub overfill: u64,
    pub underfill: u64,
    pub substitution: u64,
}

/// Reporting rows, with overfill and underfill combined.
pub const TAXONOMY_ROWS: [&str; 5] = [
    "true_positive",
    "deletion",
    "insertion",
    "overfill_underfill",
    "substitution",
];

impl Taxonomy {
    pub fn total(&self) -> u64 {
        self.true_positive + self.deletion + self.insertion + self.overfill + self.underfill + self.substitution
    }

    /// Counts in [`TAXONOMY_ROWS`] order.
    pub fn rows(&self) -> [u64; 5] {
        [
            self.true_positive,
            self.deletion,
            self.insertion,
            self.overfill + self.underfill,
            self.substitution,
        ]
    }

    pub fn merge(&mut self, other: &Taxonomy) {
        self.true_positive += other.true_positive;
        self.deletion += other.deletion;
        self.insertion += other.insertion;
        self.overfill += other.overfill;
        self.underfill += other.underfill;
        self.substitution += other.substitution;
    }

    /// Percentages of [`Taxonomy::rows`] at two decimals, apportioned by
    /// largest remainder so that they sum to exactly 100 (all zero for an
    /// empty stream).
    pub fn percentages(&self) -> [f64; 5] {
        let counts = self.rows();
        let total = self.total();
        if total == 0 {
            return [0.0; 5];
        }
        const UNITS: u128 = 10_000;
        let mut units = [0u128; 5];
        let mut remainders = [(0u128, 0usize); 5];
        for (i, &c) in counts.iter().enumerate() {
            let exact = c as u128 * UNITS;
            units[i] = exact / total as u128;
            remainders[i] = (exact % total as u128, i);
        }
        let assigned: u128 = units.iter().sum();
        remainders.sort_by(|a, b| b.0.cmp(&a.0).then(a.1.cmp(&b.1)));
        for &(_, i) in remainders.iter().take((UNITS - assigned) as usize) {
            units[i] += 1;
        }
        units.map(|u| u as f64 / 100.0)
    }
}

/// Classifies every frame of `pred` against `truth`.
pub fn misalignment(truth: &[usize], pred: &[usize], null_index: Option<usize>) -> Result<Taxonomy, EvalError> {
    let null = null_index.ok_or(EvalError::NoNullClass)?;
    if truth.len() != pred.len() {
        return Err(EvalError::LengthMismatch {
            truth: truth.len(),
            pred: pred.len(),
        });
    }
    // For each frame: does its run in one stream contain a frame where the
    // other stream has the same label?
    let covered = |runs_of: &[usize], other: &[usize]| -> Vec<bool> {
        let mut out = vec![false; runs_of.len()];
        for r in runs(runs_of) {
            let hit = other[r.start..r.end].contains(&r.label);
            out[r.start..r.end].fill(hit);
        }
        out
    };
    let pred_run_hits = covered(pred, truth);
    let truth_run_hits = covered(truth, pred);

    let mut tax = Taxonomy::default();
    for i in 0..truth.len() {
        let (t, p) = (truth[i], pred[i]);
        if t == p {
            tax.true_positive += 1;
        } else if t == null {
            if pred_run_hits[i] {
                tax.overfill += 1;
            } else {
                tax.insertion += 1;
            }
        } else if p == null {
            if truth_run_hits[i] {
                tax.underfill += 1;
            } else {
                tax.deletion += 1;
            }
        } else {
            tax.substitution += 1;
        }
    }
    Ok(tax)
}
