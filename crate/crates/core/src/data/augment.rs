use rand::seq::SliceRandom;
use rand::Rng;
use rand_distr::{Beta, Distribution};

use super::{Batch, DataError};
use crate::tensor::Tensor;

/// Mixup within a minibatch: row `i` becomes `λ_i·x_i + (1−λ_i)·x_{π(i)}`
/// (labels likewise) with one `λ_i ~ Beta(α, α)` per row and `π` a uniform
/// random permutation of the batch. The mixing ratios are drawn before the
/// permutation.
pub fn mixup_batch<R: Rng + ?Sized>(batch: &Batch, alpha: f64, rng: &mut R) -> Result<Batch, DataError> {
    if !(alpha > 0.0 && alpha.is_finite()) {
        return Err(DataError::InvalidParameter(format!("mixup alpha must be positive, got {alpha}")));
    }
    if batch.is_empty() {
        return Err(DataError::InvalidParameter("mixup needs a non-empty batch".into()));
    }
    let beta = Beta::new(alpha, alpha).map_err(|e| DataError::InvalidParameter(e.to_string()))?;
    let lambdas: Vec<f64> = (0..batch.len()).map(|_| beta.sample(rng)).collect();
    let mut partners: Vec<usize> = (0..batch.len()).collect();
    partners.shuffle(rng);
    mix_pairs(batch, &lambdas, &partners)
}

/// Deterministic core of [`mixup_batch`]. Each output row keeps the origin
/// of its first member.
pub fn mix_pairs(batch: &Batch, lambdas: &[f64], partners: &[usize]) -> Result<Batch, DataError> {
    let b = batch.len();
    if lambdas.len() != b || partners.len() != b {
        return Err(DataError::InvalidParameter(format!(
            "{} ratios and {} partners for a batch of {b}",
            lambdas.len(),
            partners.len()
        )));
    }
    if let Some(&l) = lambdas.iter().find(|l| !(0.0..=1.0).contains(*l)) {
        return Err(DataError::InvalidParameter(format!("mixing ratio {l} outside [0, 1]")));
    }
    if let Some(&p) = partners.iter().find(|&&p| p >= b) {
        return Err(DataError::InvalidParameter(format!("partner index {p} outside batch")));
    }
    let mix = |t: &Tensor| -> Tensor {
        let row = t.len() / b;
        let src = t.data();
        let mut out = Vec::with_capacity(t.len());
        for i in 0..b {
            let (l, j) = (lambdas[i], partners[i]);
            let xi = &src[i * row..(i + 1) * row];
            let xj = &src[j * row..(j + 1) * row];
            out.extend(xi.iter().zip(xj).map(|(a, c)| l * a + (1.0 - l) * c));
        }
        Tensor::new(t.shape().to_vec(), out).expect("same shape")
    };
    Ok(Batch {
        windows: mix(&batch.windows),
        labels: mix(&batch.labels),
        origins: batch.origins.clone(),
    })
}
