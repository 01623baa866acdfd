//! Soft-target cross-entropy, center loss and their weighted sum.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::tensor::{Tape, Tensor, TensorError, Var};

/// Tolerance for a target row to count as a probability vector.
pub const SIMPLEX_TOLERANCE: f64 = 1e-6;

#[derive(Debug, Error)]
pub enum ObjectiveError {
    #[error("target row {row} is not a probability vector (sum {sum}, min {min})")]
    OffSimplex { row: usize, sum: f64, min: f64 },
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),
    #[error(transparent)]
    Tensor(#[from] TensorError),
}

fn check_targets(targets: &Tensor) -> Result<(usize, usize), ObjectiveError> {
    let [b, c] = targets.shape()[..] else {
        return Err(ObjectiveError::InvalidParameter(format!(
            "targets must be [B, classes], got {:?}",
            targets.shape()
        )));
    };
    for (row, y) in targets.data().chunks(c.max(1)).enumerate() {
        let sum: f64 = y.iter().sum();
        let min = y.iter().copied().fold(f64::INFINITY, f64::min);
        if (sum - 1.0).abs() > SIMPLEX_TOLERANCE || min < -SIMPLEX_TOLERANCE || !sum.is_finite() {
            return Err(ObjectiveError::OffSimplex { row, sum, min });
        }
    }
    Ok((b, c))
}

/// `−(1/B) Σ_i Σ_c y_ic · log softmax(logits_i)_c`.
pub fn cross_entropy(tape: &mut Tape, logits: Var, targets: &Tensor) -> Result<Var, ObjectiveError> {
    let (b, _) = check_targets(targets)?;
    if tape.shape(logits) != targets.shape() {
        return Err(TensorError::ShapeMismatch {
            op: "cross_entropy",
            lhs: tape.shape(logits).to_vec(),
            rhs: targets.shape().to_vec(),
        }
        .into());
    }
    let log_p = tape.log_softmax(logits, 1)?;
    let y = tape.constant(targets.clone());
    let weighted = tape.mul(log_p, y)?;
    let total = tape.sum(weighted);
    Ok(tape.scale(total, -1.0 / b.max(1) as f64))
}

/// `(1/B) Σ_i Σ_c y_ic · ½‖z_i − centers_c‖²`; with one-hot targets this is
/// half the mean squared distance to each sample's own class center.
pub fn center_loss(tape: &mut Tape, z: Var, targets: &Tensor, centers: Var) -> Result<Var, ObjectiveError> {
    let (b, c) = check_targets(targets)?;
    let h = tape.shape(z).get(1).copied().unwrap_or(0);
    if tape.shape(z) != [b, h] || tape.shape(centers) != [c, h] {
        return Err(TensorError::ShapeMismatch {
            op: "center_loss",
            lhs: tape.shape(z).to_vec(),
            rhs: tape.shape(centers).to_vec(),
        }
        .into());
    }
    let zr = tape.reshape(z, &[b, 1, h])?;
    let ze = tape.expand(zr, &[b, c, h])?;
    let cr = tape.reshape(centers, &[1, c, h])?;
    let ce = tape.expand(cr, &[b, c, h])?;
    let diff = tape.sub(ze, ce)?;
    let sq = tape.mul(diff, diff)?;
    let dist = tape.sum_axis(sq, 2)?;
    let y = tape.constant(targets.clone());
    let weighted = tape.mul(dist, y)?;
    let total = tape.sum(weighted);
    Ok(tape.scale(total, 0.5 / b.max(1) as f64))
}

/// Loss components of one evaluation of the joint objective.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct LossReport {
    pub total: f64,
    pub cross_entropy: f64,
    pub center: f64,
    pub gamma: f64,
}

pub fn total_loss(cross_entropy: f64, center: f64, gamma: f64) -> Result<LossReport, ObjectiveError> {
    check_gamma(gamma)?;
    Ok(LossReport {
        total: cross_entropy + gamma * center,
        cross_entropy,
        center,
        gamma,
    })
}

fn check_gamma(gamma: f64) -> Result<(), ObjectiveError> {
    if !(gamma >= 0.0 && gamma.is_finite()) {
        return Err(ObjectiveError::InvalidParameter(format!(
            "center-loss weight must be a finite value ≥ 0, got {gamma}"
        )));
    }
    Ok(())
}

/// `ce + γ·center` on the tape, with the matching report.
pub fn joint_loss(
    tape: &mut Tape,
    ce: Var,
    center: Option<Var>,
    gamma: f64,
) -> Result<(Var, LossReport), ObjectiveError> {
    check_gamma(gamma)?;
    let ce_value = tape.value(ce).item()?;
    let Some(center) = center else {
        return Ok((ce, total_loss(ce_value, 0.0, gamma)?));
    };
    let center_value = tape.value(center).item()?;
    let weighted = tape.scale(center, gamma);
    let total = tape.add(ce, weighted)?;
    let mut report = total_loss(ce_value, center_value, gamma)?;
    report.total = tape.value(total).item()?;
    Ok((total, report))
}
