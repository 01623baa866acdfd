use super::EvalError;
use crate::data::{argmax, Segment, SensorSequence};
use crate::model::{model_forward, ForwardOptions, ModelParams};
use crate::rng::seeded;
use crate::tensor::Tensor;

/// Windows scored per forward pass.
pub const PREDICT_CHUNK: usize = 256;

/// Anything that maps `[B, D, W]` windows to `[B, classes]` scores.
pub trait WindowClassifier {
    fn window(&self) -> usize;
    fn logits(&self, windows: &Tensor) -> Result<Tensor, EvalError>;
}

impl WindowClassifier for ModelParams {
    fn window(&self) -> usize {
        self.config().window
    }

    fn logits(&self, windows: &Tensor) -> Result<Tensor, EvalError> {
        // inference draws nothing from the generator
        let fwd = model_forward(self, windows, &ForwardOptions::inference(), &mut seeded(0))?;
        Ok(fwd.tape.value(fwd.logits).clone())
    }
}

fn argmax_rows(logits: &Tensor) -> Vec<usize> {
    let c = logits.shape().get(1).copied().unwrap_or(1).max(1);
    logits.data().chunks(c).map(argmax).collect()
}

/// One label per sample. Windows slide with stride 1; each window's arg-max
/// class goes to its last sample, and the first `W − 1` samples take the
/// first window's class.
pub fn samplewise_predict<M: WindowClassifier + ?Sized>(
    model: &M,
    seq: &SensorSequence,
) -> Result<Vec<usize>, EvalError> {
    let w = model.window();
    let n = seq.len();
    if n < w {
        return Err(EvalError::SequenceTooShort {
            sequence: seq.id.clone(),
            len: n,
            window: w,
        });
    }
    let count = n - w + 1;
    let d = seq.channels();
    let mut per_window = Vec::with_capacity(count);
    for first in (0..count).step_by(PREDICT_CHUNK) {
        let len = PREDICT_CHUNK.min(count - first);
        let mut data = Vec::with_capacity(len * d * w);
        for s in first..first + len {
            data.extend_from_slice(seq.window(s, w).data());
        }
        let batch = Tensor::new(vec![len, d, w], data)?;
        per_window.extend(argmax_rows(&model.logits(&batch)?));
    }
    let mut out = Vec::with_capacity(n);
    out.extend(std::iter::repeat_n(per_window[0], w - 1));
    out.extend(per_window);
    Ok(out)
}

/// Arg-max class of each segment.
pub fn predict_segments<M: WindowClassifier + ?Sized>(model: &M, segments: &[Segment]) -> Result<Vec<usize>, EvalError> {
    let mut out = Vec::with_capacity(segments.len());
    for chunk in segments.chunks(PREDICT_CHUNK) {
        let refs: Vec<&Segment> = chunk.iter().collect();
        let batch = crate::data::stack_segments(&refs)?;
        out.extend(argmax_rows(&model.logits(&batch.windows)?));
    }
    Ok(out)
}
