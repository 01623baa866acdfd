use super::{AdamConfig, TrainError};
use crate::model::ModelParams;
use crate::tensor::Tensor;

/// First and second moment estimates, one pair per parameter block.
#[derive(Clone, Debug, PartialEq)]
pub struct OptimizerState {
    pub step: u64,
    pub m: Vec<Tensor>,
    pub v: Vec<Tensor>,
}

impl OptimizerState {
    pub fn new(params: &ModelParams) -> Self {
        let zeros: Vec<Tensor> = params.blocks().iter().map(|b| Tensor::zeros(b.value.shape())).collect();
        Self {
            step: 0,
            m: zeros.clone(),
            v: zeros,
        }
    }
}

/// One bias-corrected Adam update. Gradients are checked for non-finite
/// values before anything is modified.
pub fn adam_step(
    params: &mut ModelParams,
    grads: &[Tensor],
    state: &mut OptimizerState,
    lr: f64,
    cfg: &AdamConfig,
) -> Result<(), TrainError> {
    let blocks = params.blocks_mut();
    if grads.len() != blocks.len() || state.m.len() != blocks.len() || state.v.len() != blocks.len() {
        return Err(TrainError::Config(format!(
            "optimizer holds {} blocks, model {} and gradients {}",
            state.m.len(),
            blocks.len(),
            grads.len()
        )));
    }
    for (block, g) in blocks.iter().zip(grads) {
        if g.shape() != block.value.shape() {
            return Err(TrainError::Config(format!(
                "gradient of `{}` has shape {:?}, parameter {:?}",
                block.name,
                g.shape(),
                block.value.shape()
            )));
        }
        if !g.all_finite() {
            return Err(TrainError::NonFinite {
                block: block.name.clone(),
            });
        }
    }
    state.step += 1;
    let t = state.step as i32;
    let c1 = 1.0 - cfg.beta1.powi(t);
    let c2 = 1.0 - cfg.beta2.powi(t);
    for ((block, g), (m, v)) in blocks.iter_mut().zip(grads).zip(state.m.iter_mut().zip(state.v.iter_mut())) {
        let p = block.value.data_mut();
        for (((p, &g), m), v) in p.iter_mut().zip(g.data()).zip(m.data_mut()).zip(v.data_mut()) {
            *m = cfg.beta1 * *m + (1.0 - cfg.beta1) * g;
            *v = cfg.beta2 * *v + (1.0 - cfg.beta2) * g * g;
            let m_hat = *m / c1;
            let v_hat = *v / c2;
            *p -= lr * m_hat / (v_hat.sqrt() + cfg.eps);
        }
    }
    Ok(())
}
