use rand::seq::SliceRandom;

use super::{Batch, DataError, Segment};
use crate::rng::seeded;
use crate::tensor::Tensor;

/// Stacks segments into one batch. All windows must share a shape.
pub fn stack_segments(segments: &[&Segment]) -> Result<Batch, DataError> {
    let first = segments
        .first()
        .ok_or_else(|| DataError::InvalidParameter("cannot stack zero segments".into()))?;
    let wshape = first.window.shape().to_vec();
    let classes = first.label.len();
    let mut windows = Vec::with_capacity(segments.len() * first.window.len());
    let mut labels = Vec::with_capacity(segments.len() * classes);
    for s in segments {
        if s.window.shape() != wshape.as_slice() || s.label.len() != classes {
            return Err(DataError::InvalidParameter(format!(
                "segment {:?} has window {:?} / {} classes, expected {:?} / {classes}",
                s.origin,
                s.window.shape(),
                s.label.len(),
                wshape
            )));
        }
        windows.extend_from_slice(s.window.data());
        labels.extend_from_slice(&s.label);
    }
    let mut shape = vec![segments.len()];
    shape.extend(&wshape);
    Ok(Batch {
        windows: Tensor::new(shape, windows).expect("stacked windows"),
        labels: Tensor::new(vec![segments.len(), classes], labels).expect("stacked labels"),
        origins: segments.iter().map(|s| s.origin).collect(),
    })
}

/// Batches over a seeded shuffle of the segments.
pub struct BatchStream<'a> {
    segments: &'a [Segment],
    order: Vec<usize>,
    batch_size: usize,
    next: usize,
}

impl Iterator for BatchStream<'_> {
    type Item = Batch;

    fn next(&mut self) -> Option<Batch> {
        if self.next >= self.order.len() {
            return None;
        }
        let end = (self.next + self.batch_size).min(self.order.len());
        let picked: Vec<&Segment> = self.order[self.next..end].iter().map(|&i| &self.segments[i]).collect();
        self.next = end;
        Some(stack_segments(&picked).expect("segments validated up front"))
    }
}

/// Disjoint, exhaustive cover of `segments` in a seeded random order. The
/// last batch may be smaller than `batch_size`.
pub fn make_batches(segments: &[Segment], batch_size: usize, shuffle_seed: u64) -> Result<BatchStream<'_>, DataError> {
    if batch_size == 0 {
        return Err(DataError::InvalidParameter("batch size must be at least 1".into()));
    }
    if let Some(first) = segments.first() {
        if let Some(bad) = segments
            .iter()
            .find(|s| s.window.shape() != first.window.shape() || s.label.len() != first.label.len())
        {
            stack_segments(&[first, bad])?;
        }
    }
    let mut order: Vec<usize> = (0..segments.len()).collect();
    order.shuffle(&mut seeded(shuffle_seed));
    Ok(BatchStream {
        segments,
        order,
        batch_size,
        next: 0,
    })
}
