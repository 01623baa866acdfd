use rand::Rng;

use super::kernels::{self, ConvDims};
use super::{split_axis, Tensor, TensorError};

/// Handle to a node on a [`Tape`]. Only meaningful for the tape that made it.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct Var(usize);

impl Var {
    pub fn index(self) -> usize {
        self.0
    }
}

#[derive(Debug)]
enum Op {
    Leaf,
    MatMul { a: Var, b: Var },
    BatchMatMul { a: Var, b: Var },
    Conv1d { input: Var, filters: Var, bias: Var, dims: ConvDims },
    Add { a: Var, b: Var },
    Sub { a: Var, b: Var },
    Mul { a: Var, b: Var },
    AddBias { x: Var, bias: Var },
    Scale { x: Var, factor: f64 },
    Relu { x: Var },
    Sigmoid { x: Var },
    Tanh { x: Var },
    Softmax { x: Var, axis: usize },
    LogSoftmax { x: Var, axis: usize },
    Dropout { x: Var, mask: Vec<f64> },
    Sum { x: Var },
    SumAxis { x: Var, axis: usize },
    Reshape { x: Var },
    Permute { x: Var, axes: Vec<usize> },
    Concat { inputs: Vec<Var>, axis: usize },
    Slice { x: Var, axis: usize, start: usize },
    Expand { x: Var },
}

#[derive(Debug)]
struct Node {
    value: Tensor,
    op: Op,
    requires_grad: bool,
    grad: Option<Vec<f64>>,
}

/// Ordered record of operations. Nodes are appended in evaluation order, so
/// every node's inputs precede it; [`Tape::backward`] visits them in exact
/// reverse order.
///
/// Gradients are retained on leaves only. Repeated `backward` calls add into
/// the retained buffers until [`Tape::zero_grad`].
#[derive(Debug, Default)]
pub struct Tape {
    nodes: Vec<Node>,
}

impl Tape {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    /// Adds a leaf that receives gradients.
    pub fn parameter(&mut self, value: Tensor) -> Var {
        self.push(value, Op::Leaf, true)
    }

    /// Adds a leaf that never receives gradients.
    pub fn constant(&mut self, value: Tensor) -> Var {
        self.push(value, Op::Leaf, false)
    }

    pub fn value(&self, v: Var) -> &Tensor {
        &self.nodes[v.0].value
    }

    pub fn shape(&self, v: Var) -> &[usize] {
        self.nodes[v.0].value.shape()
    }

    pub fn requires_grad(&self, v: Var) -> bool {
        self.nodes[v.0].requires_grad
    }

    /// Accumulated gradient of a leaf, shaped like its value.
    pub fn grad(&self, v: Var) -> Option<Tensor> {
        let node = &self.nodes[v.0];
        node.grad
            .as_ref()
            .map(|g| Tensor::new(node.value.shape().to_vec(), g.clone()).expect("grad shape"))
    }

    pub fn zero_grad(&mut self) {
        for node in &mut self.nodes {
            node.grad = None;
        }
    }

    fn push(&mut self, value: Tensor, op: Op, requires_grad: bool) -> Var {
        self.nodes.push(Node {
            value,
            op,
            requires_grad,
            grad: None,
        });
        Var(self.nodes.len() - 1)
    }

    fn derived(&mut self, shape: Vec<usize>, data: Vec<f64>, op: Op, inputs: &[Var]) -> Var {
        let requires_grad = inputs.iter().any(|v| self.nodes[v.0].requires_grad);
        let value = Tensor::new(shape, data).expect("op produced consistent shape");
        self.push(value, op, requires_grad)
    }

    fn data(&self, v: Var) -> &[f64] {
        self.nodes[v.0].value.data()
    }

    fn same_shape(&self, op: &'static str, a: Var, b: Var) -> Result<(), TensorError> {
        if self.shape(a) != self.shape(b) {
            return Err(TensorError::ShapeMismatch {
                op,
                lhs: self.shape(a).to_vec(),
                rhs: self.shape(b).to_vec(),
            });
        }
        Ok(())
    }

    fn check_axis(&self, op: &'static str, v: Var, axis: usize) -> Result<(), TensorError> {
        let rank = self.shape(v).len();
        if axis >= rank {
            return Err(TensorError::InvalidAxis { op, axis, rank });
        }
        Ok(())
    }

    fn check_rank(&self, op: &'static str, v: Var, expected: usize) -> Result<(), TensorError> {
        if self.shape(v).len() != expected {
            return Err(TensorError::Rank {
                op,
                expected,
                shape: self.shape(v).to_vec(),
            });
        }
        Ok(())
    }

    // ---- linear algebra -------------------------------------------------

    /// `[m×k] · [k×n]`.
    pub fn matmul(&mut self, a: Var, b: Var) -> Result<Var, TensorError> {
        self.check_rank("matmul", a, 2)?;
        self.check_rank("matmul", b, 2)?;
        let (m, k) = (self.shape(a)[0], self.shape(a)[1]);
        let (k2, n) = (self.shape(b)[0], self.shape(b)[1]);
        if k != k2 {
            return Err(TensorError::ShapeMismatch {
                op: "matmul",
                lhs: self.shape(a).to_vec(),
                rhs: self.shape(b).to_vec(),
            });
        }
        let out = kernels::matmul(self.data(a), self.data(b), m, k, n);
        Ok(self.derived(vec![m, n], out, Op::MatMul { a, b }, &[a, b]))
    }

    /// `[batch×m×k] · [batch×k×n]`.
    pub fn bmm(&mut self, a: Var, b: Var) -> Result<Var, TensorError> {
        self.check_rank("bmm", a, 3)?;
        self.check_rank("bmm", b, 3)?;
        let (sa, sb) = (self.shape(a), self.shape(b));
        if sa[0] != sb[0] || sa[2] != sb[1] {
            return Err(TensorError::ShapeMismatch {
                op: "bmm",
                lhs: sa.to_vec(),
                rhs: sb.to_vec(),
            });
        }
        let (batch, m, k, n) = (sa[0], sa[1], sa[2], sb[2]);
        let out = kernels::bmm(self.data(a), self.data(b), batch, m, k, n);
        Ok(self.derived(vec![batch, m, n], out, Op::BatchMatMul { a, b }, &[a, b]))
    }

    /// Valid (unpadded) stride-1 convolution. `input` is `[c_in, len]` or
    /// `[batch, c_in, len]`, `filters` is `[c_out, c_in, kernel]`, `bias` is
    /// `[c_out]`. Output length is `len − kernel + 1`.
    pub fn conv1d_valid(&mut self, input: Var, filters: Var, bias: Var) -> Result<Var, TensorError> {
        let xs = self.shape(input).to_vec();
        let (batch, c_in, len, batched) = match xs.len() {
            2 => (1, xs[0], xs[1], false),
            3 => (xs[0], xs[1], xs[2], true),
            _ => {
                return Err(TensorError::Rank {
                    op: "conv1d_valid",
                    expected: 3,
                    shape: xs,
                })
            }
        };
        self.check_rank("conv1d_valid", filters, 3)?;
        let fs = self.shape(filters).to_vec();
        if fs[1] != c_in {
            return Err(TensorError::ShapeMismatch {
                op: "conv1d_valid",
                lhs: xs,
                rhs: fs,
            });
        }
        if self.shape(bias) != [fs[0]] {
            return Err(TensorError::ShapeMismatch {
                op: "conv1d_valid bias",
                lhs: fs,
                rhs: self.shape(bias).to_vec(),
            });
        }
        let kernel = fs[2];
        if len < kernel || kernel == 0 {
            return Err(TensorError::WindowTooShort { length: len, kernel });
        }
        let dims = ConvDims {
            batch,
            c_in,
            len,
            c_out: fs[0],
            kernel,
        };
        let out = kernels::conv1d_forward(self.data(input), self.data(filters), self.data(bias), dims);
        let shape = if batched {
            vec![batch, dims.c_out, dims.out_len()]
        } else {
            vec![dims.c_out, dims.out_len()]
        };
        Ok(self.derived(
            shape,
            out,
            Op::Conv1d {
                input,
                filters,
                bias,
                dims,
            },
            &[input, filters, bias],
        ))
    }

    // ---- elementwise ----------------------------------------------------

    fn zip_with(
        &mut self,
        name: &'static str,
        a: Var,
        b: Var,
        f: impl Fn(f64, f64) -> f64,
        op: Op,
    ) -> Result<Var, TensorError> {
        self.same_shape(name, a, b)?;
        let out = self
            .data(a)
            .iter()
            .zip(self.data(b))
            .map(|(&x, &y)| f(x, y))
            .collect();
        let shape = self.shape(a).to_vec();
        Ok(self.derived(shape, out, op, &[a, b]))
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var, TensorError> {
        self.zip_with("add", a, b, |x, y| x + y, Op::Add { a, b })
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Result<Var, TensorError> {
        self.zip_with("sub", a, b, |x, y| x - y, Op::Sub { a, b })
    }

    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var, TensorError> {
        self.zip_with("mul", a, b, |x, y| x * y, Op::Mul { a, b })
    }

    /// Adds `bias[n]` along the last axis of `x[..., n]`.
    pub fn add_bias(&mut self, x: Var, bias: Var) -> Result<Var, TensorError> {
        let n = *self.shape(x).last().unwrap_or(&1);
        if self.shape(bias) != [n] {
            return Err(TensorError::ShapeMismatch {
                op: "add_bias",
                lhs: self.shape(x).to_vec(),
                rhs: self.shape(bias).to_vec(),
            });
        }
        let b = self.data(bias);
        let out = self
            .data(x)
            .chunks(n)
            .flat_map(|row| row.iter().zip(b).map(|(&v, &bv)| v + bv))
            .collect();
        let shape = self.shape(x).to_vec();
        Ok(self.derived(shape, out, Op::AddBias { x, bias }, &[x, bias]))
    }

    fn map(&mut self, x: Var, f: impl Fn(f64) -> f64, op: Op) -> Var {
        let out = self.data(x).iter().map(|&v| f(v)).collect();
        let shape = self.shape(x).to_vec();
        self.derived(shape, out, op, &[x])
    }

    pub fn scale(&mut self, x: Var, factor: f64) -> Var {
        self.map(x, |v| v * factor, Op::Scale { x, factor })
    }

    pub fn relu(&mut self, x: Var) -> Var {
        self.map(x, |v| if v > 0.0 { v } else { 0.0 }, Op::Relu { x })
    }

    pub fn sigmoid(&mut self, x: Var) -> Var {
        self.map(x, sigmoid, Op::Sigmoid { x })
    }

    pub fn tanh(&mut self, x: Var) -> Var {
        self.map(x, f64::tanh, Op::Tanh { x })
    }

    /// Softmax along `axis`, max-subtracted.
    pub fn softmax(&mut self, x: Var, axis: usize) -> Result<Var, TensorError> {
        self.check_axis("softmax", x, axis)?;
        let shape = self.shape(x).to_vec();
        let mut out = self.data(x).to_vec();
        for_each_lane(&shape, axis, |idx| {
            let m = idx.clone().map(|i| out[i]).fold(f64::NEG_INFINITY, f64::max);
            let mut s = 0.0;
            for i in idx.clone() {
                out[i] = (out[i] - m).exp();
                s += out[i];
            }
            for i in idx {
                out[i] /= s;
            }
        });
        Ok(self.derived(shape, out, Op::Softmax { x, axis }, &[x]))
    }

    /// Log-softmax along `axis` via log-sum-exp.
    pub fn log_softmax(&mut self, x: Var, axis: usize) -> Result<Var, TensorError> {
        self.check_axis("log_softmax", x, axis)?;
        let shape = self.shape(x).to_vec();
        let mut out = self.data(x).to_vec();
        for_each_lane(&shape, axis, |idx| {
            let m = idx.clone().map(|i| out[i]).fold(f64::NEG_INFINITY, f64::max);
            let lse = m + idx.clone().map(|i| (out[i] - m).exp()).sum::<f64>().ln();
            for i in idx {
                out[i] -= lse;
            }
        });
        Ok(self.derived(shape, out, Op::LogSoftmax { x, axis }, &[x]))
    }

    /// Inverted dropout: in training mode each element is zeroed with
    /// probability `p` and survivors are scaled by `1/(1−p)`. Identity (the
    /// same `Var`) in inference mode or when `p == 0`.
    pub fn dropout<R: Rng + ?Sized>(
        &mut self,
        x: Var,
        p: f64,
        training: bool,
        rng: &mut R,
    ) -> Result<Var, TensorError> {
        if !(0.0..1.0).contains(&p) {
            return Err(TensorError::InvalidProbability(p));
        }
        if !training || p == 0.0 {
            return Ok(x);
        }
        let keep = 1.0 / (1.0 - p);
        let mask: Vec<f64> = (0..self.data(x).len())
            .map(|_| if rng.random::<f64>() < p { 0.0 } else { keep })
            .collect();
        let out = self.data(x).iter().zip(&mask).map(|(&v, &m)| v * m).collect();
        let shape = self.shape(x).to_vec();
        Ok(self.derived(shape, out, Op::Dropout { x, mask }, &[x]))
    }

    // ---- reductions -----------------------------------------------------

    /// Sum of all elements, as a rank-0 tensor.
    pub fn sum(&mut self, x: Var) -> Var {
        let s = self.data(x).iter().sum();
        self.derived(Vec::new(), vec![s], Op::Sum { x }, &[x])
    }

    pub fn mean(&mut self, x: Var) -> Var {
        let n = self.data(x).len().max(1) as f64;
        let s = self.sum(x);
        self.scale(s, 1.0 / n)
    }

    /// Sum along `axis`; the axis is removed from the shape.
    pub fn sum_axis(&mut self, x: Var, axis: usize) -> Result<Var, TensorError> {
        self.check_axis("sum_axis", x, axis)?;
        let shape = self.shape(x).to_vec();
        let (outer, dim, inner) = split_axis(&shape, axis);
        let src = self.data(x);
        let mut out = vec![0.0; outer * inner];
        for o in 0..outer {
            for d in 0..dim {
                let row = &src[(o * dim + d) * inner..][..inner];
                for (acc, &v) in out[o * inner..][..inner].iter_mut().zip(row) {
                    *acc += v;
                }
            }
        }
        let mut new_shape = shape;
        new_shape.remove(axis);
        Ok(self.derived(new_shape, out, Op::SumAxis { x, axis }, &[x]))
    }

    // ---- shape ----------------------------------------------------------

    pub fn reshape(&mut self, x: Var, shape: &[usize]) -> Result<Var, TensorError> {
        let n: usize = shape.iter().product();
        if n != self.data(x).len() {
            return Err(TensorError::ShapeMismatch {
                op: "reshape",
                lhs: self.shape(x).to_vec(),
                rhs: shape.to_vec(),
            });
        }
        let data = self.data(x).to_vec();
        Ok(self.derived(shape.to_vec(), data, Op::Reshape { x }, &[x]))
    }

    /// Reorders axes: output axis `i` is input axis `axes[i]`.
    pub fn permute(&mut self, x: Var, axes: &[usize]) -> Result<Var, TensorError> {
        let shape = self.shape(x).to_vec();
        let rank = shape.len();
        let mut seen = vec![false; rank];
        let valid = axes.len() == rank
            && axes.iter().all(|&a| a < rank && !std::mem::replace(&mut seen[a], true));
        if !valid {
            return Err(TensorError::InvalidPermutation {
                axes: axes.to_vec(),
                rank,
            });
        }
        let (out_shape, out) = permute_data(self.data(x), &shape, axes);
        Ok(self.derived(
            out_shape,
            out,
            Op::Permute {
                x,
                axes: axes.to_vec(),
            },
            &[x],
        ))
    }

    /// Concatenates along `axis`; all other extents must agree.
    pub fn concat(&mut self, inputs: &[Var], axis: usize) -> Result<Var, TensorError> {
        let first = *inputs.first().ok_or(TensorError::Rank {
            op: "concat",
            expected: 1,
            shape: Vec::new(),
        })?;
        self.check_axis("concat", first, axis)?;
        let base = self.shape(first).to_vec();
        let mut total = 0;
        for &v in inputs {
            let s = self.shape(v);
            let compatible = s.len() == base.len()
                && s.iter().zip(&base).enumerate().all(|(i, (a, b))| i == axis || a == b);
            if !compatible {
                return Err(TensorError::ShapeMismatch {
                    op: "concat",
                    lhs: base.clone(),
                    rhs: s.to_vec(),
                });
            }
            total += s[axis];
        }
        let (outer, _, inner) = split_axis(&base, axis);
        let mut out = Vec::with_capacity(outer * total * inner);
        for o in 0..outer {
            for &v in inputs {
                let d = self.shape(v)[axis];
                out.extend_from_slice(&self.data(v)[o * d * inner..(o + 1) * d * inner]);
            }
        }
        let mut shape = base;
        shape[axis] = total;
        Ok(self.derived(
            shape,
            out,
            Op::Concat {
                inputs: inputs.to_vec(),
                axis,
            },
            inputs,
        ))
    }

    /// Stacks equally shaped tensors along a new axis.
    pub fn stack(&mut self, inputs: &[Var], axis: usize) -> Result<Var, TensorError> {
        let mut expanded = Vec::with_capacity(inputs.len());
        for &v in inputs {
            let mut s = self.shape(v).to_vec();
            if axis > s.len() {
                return Err(TensorError::InvalidAxis {
                    op: "stack",
                    axis,
                    rank: s.len(),
                });
            }
            s.insert(axis, 1);
            expanded.push(self.reshape(v, &s)?);
        }
        self.concat(&expanded, axis)
    }

    /// `len` entries of `axis` starting at `start`.
    pub fn slice(&mut self, x: Var, axis: usize, start: usize, len: usize) -> Result<Var, TensorError> {
        self.check_axis("slice", x, axis)?;
        let shape = self.shape(x).to_vec();
        let (outer, dim, inner) = split_axis(&shape, axis);
        if start + len > dim {
            return Err(TensorError::SliceOutOfRange {
                axis,
                start,
                end: start + len,
                dim,
            });
        }
        let src = self.data(x);
        let mut out = Vec::with_capacity(outer * len * inner);
        for o in 0..outer {
            out.extend_from_slice(&src[(o * dim + start) * inner..(o * dim + start + len) * inner]);
        }
        let mut new_shape = shape;
        new_shape[axis] = len;
        Ok(self.derived(new_shape, out, Op::Slice { x, axis, start }, &[x]))
    }

    /// Broadcasts size-1 axes of `x` up to `shape` (same rank).
    pub fn expand(&mut self, x: Var, shape: &[usize]) -> Result<Var, TensorError> {
        let src_shape = self.shape(x).to_vec();
        let ok = src_shape.len() == shape.len()
            && src_shape.iter().zip(shape).all(|(&s, &t)| s == t || s == 1);
        if !ok {
            return Err(TensorError::ShapeMismatch {
                op: "expand",
                lhs: src_shape,
                rhs: shape.to_vec(),
            });
        }
        let map = broadcast_index_map(&src_shape, shape);
        let src = self.data(x);
        let out = map.iter().map(|&i| src[i]).collect();
        Ok(self.derived(shape.to_vec(), out, Op::Expand { x }, &[x]))
    }

    // ---- backward -------------------------------------------------------

    /// Reverse sweep from a single-element `loss`. Leaf gradients are added
    /// into their retained buffers; leaves that do not influence the loss
    /// end up with an all-zero gradient.
    pub fn backward(&mut self, loss: Var) -> Result<(), TensorError> {
        let loss_node = &self.nodes[loss.0];
        if loss_node.value.len() != 1 {
            return Err(TensorError::NotScalar {
                shape: loss_node.value.shape().to_vec(),
            });
        }
        let mut grads: Vec<Option<Vec<f64>>> = vec![None; loss.0 + 1];
        grads[loss.0] = Some(vec![1.0]);
        for id in (0..=loss.0).rev() {
            let Some(g) = grads[id].take() else { continue };
            if !self.nodes[id].requires_grad {
                continue;
            }
            if matches!(self.nodes[id].op, Op::Leaf) {
                accumulate(&mut self.nodes[id].grad, g);
            } else {
                self.backprop(id, &g, &mut grads);
            }
        }
        for node in &mut self.nodes {
            if node.requires_grad && matches!(node.op, Op::Leaf) && node.grad.is_none() {
                node.grad = Some(vec![0.0; node.value.len()]);
            }
        }
        Ok(())
    }

    fn backprop(&self, id: usize, g: &[f64], grads: &mut [Option<Vec<f64>>]) {
        let node = &self.nodes[id];
        let out = node.value.data();
        let mut send = |v: Var, contrib: Vec<f64>| {
            if self.nodes[v.0].requires_grad {
                accumulate(&mut grads[v.0], contrib);
            }
        };
        let needs = |v: Var| self.nodes[v.0].requires_grad;
        match &node.op {
            Op::Leaf => {}
            Op::MatMul { a, b } => {
                let (m, k) = (self.shape(*a)[0], self.shape(*a)[1]);
                let n = self.shape(*b)[1];
                if needs(*a) {
                    send(*a, kernels::matmul_nt(g, self.data(*b), m, n, k));
                }
                if needs(*b) {
                    send(*b, kernels::matmul_tn(self.data(*a), g, k, m, n));
                }
            }
            Op::BatchMatMul { a, b } => {
                let sa = self.shape(*a);
                let (batch, m, k) = (sa[0], sa[1], sa[2]);
                let n = self.shape(*b)[2];
                if needs(*a) {
                    let bt = kernels::batch_transpose(self.data(*b), batch, k, n);
                    send(*a, kernels::bmm(g, &bt, batch, m, n, k));
                }
                if needs(*b) {
                    let at = kernels::batch_transpose(self.data(*a), batch, m, k);
                    send(*b, kernels::bmm(&at, g, batch, k, m, n));
                }
            }
            Op::Conv1d {
                input,
                filters,
                bias,
                dims,
            } => {
                let (dx, dw, db) = kernels::conv1d_backward(
                    self.data(*input),
                    self.data(*filters),
                    g,
                    *dims,
                    needs(*input),
                );
                if let Some(dx) = dx {
                    send(*input, dx);
                }
                send(*filters, dw);
                send(*bias, db);
            }
            Op::Add { a, b } => {
                send(*a, g.to_vec());
                send(*b, g.to_vec());
            }
            Op::Sub { a, b } => {
                send(*a, g.to_vec());
                send(*b, g.iter().map(|v| -v).collect());
            }
            Op::Mul { a, b } => {
                if needs(*a) {
                    send(*a, g.iter().zip(self.data(*b)).map(|(g, y)| g * y).collect());
                }
                if needs(*b) {
                    send(*b, g.iter().zip(self.data(*a)).map(|(g, x)| g * x).collect());
                }
            }
            Op::AddBias { x, bias } => {
                let n = self.shape(*bias)[0];
                let mut db = vec![0.0; n];
                for row in g.chunks(n) {
                    for (acc, v) in db.iter_mut().zip(row) {
                        *acc += v;
                    }
                }
                send(*x, g.to_vec());
                send(*bias, db);
            }
            Op::Scale { x, factor } => send(*x, g.iter().map(|v| v * factor).collect()),
            Op::Relu { x } => send(
                *x,
                g.iter()
                    .zip(out)
                    .map(|(&g, &y)| if y > 0.0 { g } else { 0.0 })
                    .collect(),
            ),
            Op::Sigmoid { x } => send(*x, g.iter().zip(out).map(|(g, y)| g * y * (1.0 - y)).collect()),
            Op::Tanh { x } => send(*x, g.iter().zip(out).map(|(g, y)| g * (1.0 - y * y)).collect()),
            Op::Softmax { x, axis } => {
                let mut dx = vec![0.0; g.len()];
                for_each_lane(node.value.shape(), *axis, |idx| {
                    let dot: f64 = idx.clone().map(|i| g[i] * out[i]).sum();
                    for i in idx {
                        dx[i] = out[i] * (g[i] - dot);
                    }
                });
                send(*x, dx);
            }
            Op::LogSoftmax { x, axis } => {
                let mut dx = vec![0.0; g.len()];
                for_each_lane(node.value.shape(), *axis, |idx| {
                    let total: f64 = idx.clone().map(|i| g[i]).sum();
                    for i in idx {
                        dx[i] = g[i] - out[i].exp() * total;
                    }
                });
                send(*x, dx);
            }
            Op::Dropout { x, mask } => send(*x, g.iter().zip(mask).map(|(g, m)| g * m).collect()),
            Op::Sum { x } => send(*x, vec![g[0]; self.data(*x).len()]),
            Op::SumAxis { x, axis } => {
                let (outer, dim, inner) = split_axis(self.shape(*x), *axis);
                let mut dx = vec![0.0; outer * dim * inner];
                for o in 0..outer {
                    for d in 0..dim {
                        dx[(o * dim + d) * inner..][..inner].copy_from_slice(&g[o * inner..][..inner]);
                    }
                }
                send(*x, dx);
            }
            Op::Reshape { x } => send(*x, g.to_vec()),
            Op::Permute { x, axes } => {
                let mut inverse = vec![0; axes.len()];
                for (i, &a) in axes.iter().enumerate() {
                    inverse[a] = i;
                }
                let (_, dx) = permute_data(g, node.value.shape(), &inverse);
                send(*x, dx);
            }
            Op::Concat { inputs, axis } => {
                let (outer, total, inner) = split_axis(node.value.shape(), *axis);
                let mut offset = 0;
                for &v in inputs {
                    let d = self.shape(v)[*axis];
                    if needs(v) {
                        let mut dx = Vec::with_capacity(outer * d * inner);
                        for o in 0..outer {
                            dx.extend_from_slice(&g[(o * total + offset) * inner..][..d * inner]);
                        }
                        send(v, dx);
                    }
                    offset += d;
                }
            }
            Op::Slice { x, axis, start } => {
                let (outer, dim, inner) = split_axis(self.shape(*x), *axis);
                let len = node.value.shape()[*axis];
                let mut dx = vec![0.0; outer * dim * inner];
                for o in 0..outer {
                    dx[(o * dim + start) * inner..][..len * inner]
                        .copy_from_slice(&g[o * len * inner..][..len * inner]);
                }
                send(*x, dx);
            }
            Op::Expand { x } => {
                let map = broadcast_index_map(self.shape(*x), node.value.shape());
                let mut dx = vec![0.0; self.data(*x).len()];
                for (&i, &gv) in map.iter().zip(g) {
                    dx[i] += gv;
                }
                send(*x, dx);
            }
        }
    }
}

fn accumulate(slot: &mut Option<Vec<f64>>, contrib: Vec<f64>) {
    match slot {
        Some(acc) => {
            for (a, c) in acc.iter_mut().zip(&contrib) {
                *a += c;
            }
        }
        None => *slot = Some(contrib),
    }
}

pub(crate) fn sigmoid(v: f64) -> f64 {
    if v >= 0.0 {
        1.0 / (1.0 + (-v).exp())
    } else {
        let e = v.exp();
        e / (1.0 + e)
    }
}

/// Calls `f` once per 1-D lane along `axis` with the flat indices of that lane.
fn for_each_lane(shape: &[usize], axis: usize, mut f: impl FnMut(std::iter::StepBy<std::ops::Range<usize>>)) {
    let (outer, dim, inner) = split_axis(shape, axis);
    for o in 0..outer {
        for i in 0..inner {
            let base = o * dim * inner + i;
            f((base..base + dim * inner).step_by(inner));
        }
    }
}

fn permute_data(src: &[f64], shape: &[usize], axes: &[usize]) -> (Vec<usize>, Vec<f64>) {
    let rank = shape.len();
    let mut in_strides = vec![1usize; rank];
    for i in (0..rank.saturating_sub(1)).rev() {
        in_strides[i] = in_strides[i + 1] * shape[i + 1];
    }
    let out_shape: Vec<usize> = axes.iter().map(|&a| shape[a]).collect();
    let strides: Vec<usize> = axes.iter().map(|&a| in_strides[a]).collect();
    let mut out = Vec::with_capacity(src.len());
    let mut counter = vec![0usize; rank];
    for _ in 0..src.len() {
        let offset: usize = counter.iter().zip(&strides).map(|(c, s)| c * s).sum();
        out.push(src[offset]);
        for ax in (0..rank).rev() {
            counter[ax] += 1;
            if counter[ax] < out_shape[ax] {
                break;
            }
            counter[ax] = 0;
        }
    }
    (out_shape, out)
}

/// For every flat index of `target`, the flat index of `src` it reads from.
fn broadcast_index_map(src: &[usize], target: &[usize]) -> Vec<usize> {
    let rank = target.len();
    let mut src_strides = vec![0usize; rank];
    let mut acc = 1;
    for i in (0..rank).rev() {
        src_strides[i] = if src[i] == 1 { 0 } else { acc };
        acc *= src[i];
    }
    let n: usize = target.iter().product();
    let mut map = Vec::with_capacity(n);
    let mut counter = vec![0usize; rank];
    for _ in 0..n {
        map.push(counter.iter().zip(&src_strides).map(|(c, s)| c * s).sum());
        for ax in (0..rank).rev() {
            counter[ax] += 1;
            if counter[ax] < target[ax] {
                break;
            }
            counter[ax] = 0;
        }
    }
    map
}
