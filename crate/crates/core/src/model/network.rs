//! Forward pass. Feature maps are stored time-major as `[B, T, D, C]` so
//! that the per-time-step channel attention works on contiguous `[D, C]`
//! slices.

use rand::Rng;

use super::{Bound, ModelError, ModelParams, GRU_LAYERS};
use crate::config::BACKBONE_LAYERS;
use crate::tensor::{Tape, Tensor, Var};

/// Dropout rates and mode of one forward pass.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ForwardOptions {
    /// Dropout on the refined feature maps.
    pub p_feat: f64,
    /// Dropout on the classifier input.
    pub p_cls: f64,
    pub training: bool,
}

impl ForwardOptions {
    pub fn inference() -> Self {
        Self {
            p_feat: 0.0,
            p_cls: 0.0,
            training: false,
        }
    }
}

/// A recorded forward pass, ready for a loss to be attached.
#[derive(Debug)]
pub struct Forward {
    pub tape: Tape,
    pub params: Bound,
    /// `[B, classes]`.
    pub logits: Var,
    /// Sequence summary `[B, hidden]`.
    pub z: Var,
    /// Channel attention `[B·T, D, D]`, present with the cross-channel encoder.
    pub attention: Option<Var>,
    /// Temporal weights `[B, T]`, present with recurrent attention.
    pub beta: Option<Var>,
}

/// Values of a forward pass, detached from the tape.
#[derive(Clone, Debug, PartialEq)]
pub struct ForwardTrace {
    /// `[B, classes]`.
    pub logits: Tensor,
    /// `[B, hidden]`.
    pub z: Tensor,
    /// `[B, T, D, D]`; row `d` of step `t` is channel `d`'s distribution over channels.
    pub attention: Option<Tensor>,
    /// `[B, T]`.
    pub beta: Option<Tensor>,
}

impl Forward {
    pub fn trace(&self) -> ForwardTrace {
        let logits = self.tape.value(self.logits).clone();
        let batch = logits.shape()[0];
        let attention = self.attention.map(|a| {
            let t = self.tape.value(a);
            let (bt, d) = (t.shape()[0], t.shape()[1]);
            t.clone()
                .reshape(&[batch, bt / batch.max(1), d, d])
                .expect("attention is [B·T, D, D]")
        });
        ForwardTrace {
            logits,
            z: self.tape.value(self.z).clone(),
            attention,
            beta: self.beta.map(|b| self.tape.value(b).clone()),
        }
    }
}

/// Four valid convolutions with ReLU, applied to each sensor channel
/// separately with shared filters. `x` is `[B, D, W]`; the result is
/// `[B, T, D, C]` with `T = W − 16`.
pub fn backbone_forward(tape: &mut Tape, params: &Bound, x: Var) -> Result<Var, ModelError> {
    let shape = tape.shape(x).to_vec();
    let [b, d, w] = shape[..] else {
        return Err(ModelError::Config(format!("expected windows [B, D, W], got {shape:?}")));
    };
    let mut h = tape.reshape(x, &[b * d, 1, w])?;
    for layer in 0..BACKBONE_LAYERS {
        let filters = params.get(&format!("backbone.conv{layer}.weight"))?;
        let bias = params.get(&format!("backbone.conv{layer}.bias"))?;
        let conv = tape.conv1d_valid(h, filters, bias)?;
        h = tape.relu(conv);
    }
    let (c, t) = (tape.shape(h)[1], tape.shape(h)[2]);
    let h = tape.reshape(h, &[b, d, c, t])?;
    Ok(tape.permute(h, &[0, 3, 1, 2])?)
}

fn embed(tape: &mut Tape, params: &Bound, x: Var, name: &str) -> Result<Var, ModelError> {
    let y = tape.matmul(x, params.get(&format!("cie.{name}.weight"))?)?;
    match params.try_get(&format!("cie.{name}.bias")) {
        Some(bias) => Ok(tape.add_bias(y, bias)?),
        None => Ok(y),
    }
}

/// Self-attention across sensor channels at every time-step, added back
/// through a residual link. `fm` is `[B, T, D, C]`; returns the refined
/// maps (same shape) and the attention `[B·T, D, D]`.
///
/// Feature vectors are row vectors, so each embedding is `x · W`.
pub fn cie_forward(tape: &mut Tape, params: &Bound, fm: Var) -> Result<(Var, Var), ModelError> {
    let shape = tape.shape(fm).to_vec();
    let [b, t, d, c] = shape[..] else {
        return Err(ModelError::Config(format!("expected feature maps [B, T, D, C], got {shape:?}")));
    };
    let flat = tape.reshape(fm, &[b * t * d, c])?;
    let project = |tape: &mut Tape, name: &str| -> Result<Var, ModelError> {
        let y = embed(tape, params, flat, name)?;
        Ok(tape.reshape(y, &[b * t, d, c])?)
    };
    let f = project(tape, "f")?;
    let g = project(tape, "g")?;
    let h = project(tape, "h")?;
    let g_t = tape.permute(g, &[0, 2, 1])?;
    let scores = tape.bmm(f, g_t)?;
    let attention = tape.softmax(scores, 2)?;
    let mixed = tape.bmm(attention, h)?;
    let mixed = tape.reshape(mixed, &[b * t * d, c])?;
    let o = embed(tape, params, mixed, "v")?;
    let o = tape.reshape(o, &[b, t, d, c])?;
    let refined = tape.add(o, fm)?;
    Ok((refined, attention))
}

/// `[B, T, C, D]`-ordered flattening of `[B, T, D, C]` maps: element
/// `(c, d)` of step `t` lands at index `c·D + d`.
pub fn vectorize(tape: &mut Tape, fm: Var) -> Result<Var, ModelError> {
    let shape = tape.shape(fm).to_vec();
    let [b, t, d, c] = shape[..] else {
        return Err(ModelError::Config(format!("expected feature maps [B, T, D, C], got {shape:?}")));
    };
    let p = tape.permute(fm, &[0, 1, 3, 2])?;
    Ok(tape.reshape(p, &[b, t, c * d])?)
}

/// One GRU layer over `x: [B, T, I]` from a zero state; returns every
/// hidden state `[B, H]`.
///
/// `r = σ(x·W_ir + b_ir + h·W_hr + b_hr)`, `u = σ(…)` likewise,
/// `n = tanh(x·W_in + b_in + r ⊙ (h·W_hn + b_hn))`, `h' = n + u ⊙ (h − n)`,
/// with gate columns ordered `r, u, n` in the stacked weights.
pub fn gru_layer(tape: &mut Tape, params: &Bound, layer: usize, x: Var) -> Result<Vec<Var>, ModelError> {
    let shape = tape.shape(x).to_vec();
    let [b, t, input] = shape[..] else {
        return Err(ModelError::Config(format!("expected sequence [B, T, I], got {shape:?}")));
    };
    let w_ih = params.get(&format!("gru.l{layer}.w_ih"))?;
    let w_hh = params.get(&format!("gru.l{layer}.w_hh"))?;
    let b_ih = params.get(&format!("gru.l{layer}.b_ih"))?;
    let b_hh = params.get(&format!("gru.l{layer}.b_hh"))?;
    let hidden = tape.shape(w_hh)[0];

    let flat = tape.reshape(x, &[b * t, input])?;
    let gx = tape.matmul(flat, w_ih)?;
    let gx = tape.add_bias(gx, b_ih)?;
    let gx = tape.reshape(gx, &[b, t, 3 * hidden])?;

    let mut h = tape.constant(Tensor::zeros(&[b, hidden]));
    let mut states = Vec::with_capacity(t);
    for step in 0..t {
        let gx_t = tape.slice(gx, 1, step, 1)?;
        let gx_t = tape.reshape(gx_t, &[b, 3 * hidden])?;
        let gh = tape.matmul(h, w_hh)?;
        let gh = tape.add_bias(gh, b_hh)?;
        let gate = |tape: &mut Tape, src: Var, k: usize| tape.slice(src, 1, k * hidden, hidden);
        let (xr, hr) = (gate(tape, gx_t, 0)?, gate(tape, gh, 0)?);
        let (xu, hu) = (gate(tape, gx_t, 1)?, gate(tape, gh, 1)?);
        let (xn, hn) = (gate(tape, gx_t, 2)?, gate(tape, gh, 2)?);
        let r = tape.add(xr, hr)?;
        let r = tape.sigmoid(r);
        let u = tape.add(xu, hu)?;
        let u = tape.sigmoid(u);
        let rn = tape.mul(r, hn)?;
        let n = tape.add(xn, rn)?;
        let n = tape.tanh(n);
        let diff = tape.sub(h, n)?;
        let keep = tape.mul(u, diff)?;
        h = tape.add(n, keep)?;
        states.push(h);
    }
    Ok(states)
}

/// Two stacked GRU layers over `x: [B, T, I]`. With `attention`, the
/// summary is `z = Σ_t β_t h_t`, `β = softmax_t(w·h_t + b)`; otherwise it is
/// the last state. Returns `(z [B, H], β [B, T])`.
pub fn age_forward(
    tape: &mut Tape,
    params: &Bound,
    x: Var,
    attention: bool,
) -> Result<(Var, Option<Var>), ModelError> {
    let mut seq = x;
    let mut states = Vec::new();
    for layer in 0..GRU_LAYERS {
        states = gru_layer(tape, params, layer, seq)?;
        seq = tape.stack(&states, 1)?;
    }
    let last = *states
        .last()
        .ok_or_else(|| ModelError::Config("sequence has no time-steps".into()))?;
    if !attention {
        return Ok((last, None));
    }
    let shape = tape.shape(seq).to_vec();
    let (b, t, h) = (shape[0], shape[1], shape[2]);
    let flat = tape.reshape(seq, &[b * t, h])?;
    let scores = tape.matmul(flat, params.get("age.scorer.weight")?)?;
    let scores = tape.add_bias(scores, params.get("age.scorer.bias")?)?;
    let scores = tape.reshape(scores, &[b, t])?;
    let beta = tape.softmax(scores, 1)?;
    let weights = tape.reshape(beta, &[b, 1, t])?;
    let z = tape.bmm(weights, seq)?;
    let z = tape.reshape(z, &[b, h])?;
    Ok((z, Some(beta)))
}

/// `logits = dropout(z) · W + b`.
pub fn classify<R: Rng + ?Sized>(
    tape: &mut Tape,
    params: &Bound,
    z: Var,
    p_cls: f64,
    training: bool,
    rng: &mut R,
) -> Result<Var, ModelError> {
    let z = tape.dropout(z, p_cls, training, rng)?;
    let y = tape.matmul(z, params.get("classifier.weight")?)?;
    Ok(tape.add_bias(y, params.get("classifier.bias")?)?)
}

/// Full network on `windows: [B, D, W]`.
pub fn model_forward<R: Rng + ?Sized>(
    params: &ModelParams,
    windows: &Tensor,
    opts: &ForwardOptions,
    rng: &mut R,
) -> Result<Forward, ModelError> {
    let cfg = params.config();
    let shape = windows.shape();
    if shape.len() != 3 || shape[1] != cfg.channels || shape[2] != cfg.window {
        return Err(ModelError::Config(format!(
            "windows {shape:?} do not match the model input [B, {}, {}]",
            cfg.channels, cfg.window
        )));
    }
    let mut tape = Tape::new();
    let bound = params.bind(&mut tape);
    let x = tape.constant(windows.clone());
    let fm = backbone_forward(&mut tape, &bound, x)?;
    let (refined, attention) = if cfg.toggles.cie {
        let (r, a) = cie_forward(&mut tape, &bound, fm)?;
        (r, Some(a))
    } else {
        (fm, None)
    };
    let dropped = tape.dropout(refined, opts.p_feat, opts.training, rng)?;
    let seq = vectorize(&mut tape, dropped)?;
    let (z, beta) = age_forward(&mut tape, &bound, seq, cfg.toggles.age_attention)?;
    let logits = classify(&mut tape, &bound, z, opts.p_cls, opts.training, rng)?;
    Ok(Forward {
        tape,
        params: bound,
        logits,
        z,
        attention,
        beta,
    })
}
