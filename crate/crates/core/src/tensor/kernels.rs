//! Raw slice kernels. Every output element is accumulated in a fixed order
//! regardless of how work is split across threads, so results are
//! bit-identical for any thread count.

use rayon::prelude::*;

/// Rows of the output handled by one unit of (possibly parallel) work. The
/// split depends only on the shape, never on the thread count.
const ROW_BLOCK: usize = 64;
/// Below this many multiply-adds a product runs as a plain loop on the
/// calling thread.
const SMALL_PRODUCT: usize = 1 << 12;
const PAR_THRESHOLD: usize = 1 << 16;

/// Strided view of a row-major matrix operand.
#[derive(Clone, Copy)]
struct Operand<'a> {
    data: &'a [f64],
    row_stride: usize,
    col_stride: usize,
}

impl Operand<'_> {
    fn at(&self, i: usize, j: usize) -> f64 {
        self.data[i * self.row_stride + j * self.col_stride]
    }
}

/// `out[m×n] = a[m×k] · b[k×n]` for strided operands, overwriting `out`.
fn gemm(a: Operand<'_>, b: Operand<'_>, m: usize, k: usize, n: usize, out: &mut [f64]) {
    debug_assert_eq!(out.len(), m * n);
    if m == 0 || n == 0 {
        return;
    }
    if k == 0 {
        out.fill(0.0);
        return;
    }
    if m * k * n <= SMALL_PRODUCT {
        for i in 0..m {
            for j in 0..n {
                let mut acc = 0.0;
                for p in 0..k {
                    acc += a.at(i, p) * b.at(p, j);
                }
                out[i * n + j] = acc;
            }
        }
        return;
    }
    let block = |(blk, c): (usize, &mut [f64])| {
        let row0 = blk * ROW_BLOCK;
        let rows = c.len() / n;
        let a_rows = &a.data[row0 * a.row_stride..];
        // SAFETY: the operand slices cover every index the strides address
        // for `rows×k` and `k×n`, and `c` is an exclusive `rows×n` buffer.
        unsafe {
            matrixmultiply::dgemm(
                rows,
                k,
                n,
                1.0,
                a_rows.as_ptr(),
                a.row_stride as isize,
                a.col_stride as isize,
                b.data.as_ptr(),
                b.row_stride as isize,
                b.col_stride as isize,
                0.0,
                c.as_mut_ptr(),
                n as isize,
                1,
            );
        }
    };
    if m * k * n >= PAR_THRESHOLD && m > ROW_BLOCK {
        out.par_chunks_mut(ROW_BLOCK * n).enumerate().for_each(block);
    } else {
        out.chunks_mut(ROW_BLOCK * n).enumerate().for_each(block);
    }
}

fn check_len(data: &[f64], rows: usize, cols: usize) {
    assert!(data.len() >= rows * cols, "operand holds {} values, need {}", data.len(), rows * cols);
}

/// `out[m×n] = a[m×k] · b[k×n]`, overwriting `out`.
pub fn matmul_into(a: &[f64], b: &[f64], m: usize, k: usize, n: usize, out: &mut [f64]) {
    check_len(a, m, k);
    check_len(b, k, n);
    assert_eq!(out.len(), m * n);
    let a = Operand { data: a, row_stride: k, col_stride: 1 };
    let b = Operand { data: b, row_stride: n, col_stride: 1 };
    gemm(a, b, m, k, n, out);
}

pub fn matmul(a: &[f64], b: &[f64], m: usize, k: usize, n: usize) -> Vec<f64> {
    let mut out = vec![0.0; m * n];
    matmul_into(a, b, m, k, n, &mut out);
    out
}

/// Transpose of a row-major `rows×cols` matrix.
pub fn transpose2(a: &[f64], rows: usize, cols: usize) -> Vec<f64> {
    let mut out = vec![0.0; rows * cols];
    for i in 0..rows {
        for j in 0..cols {
            out[j * rows + i] = a[i * cols + j];
        }
    }
    out
}

/// `a[m×k] · b[n×k]ᵀ`.
pub fn matmul_nt(a: &[f64], b: &[f64], m: usize, k: usize, n: usize) -> Vec<f64> {
    check_len(a, m, k);
    check_len(b, n, k);
    let mut out = vec![0.0; m * n];
    let a = Operand { data: a, row_stride: k, col_stride: 1 };
    let b = Operand { data: b, row_stride: 1, col_stride: k };
    gemm(a, b, m, k, n, &mut out);
    out
}

/// `a[k×m]ᵀ · b[k×n]`.
pub fn matmul_tn(a: &[f64], b: &[f64], m: usize, k: usize, n: usize) -> Vec<f64> {
    check_len(a, k, m);
    check_len(b, k, n);
    let mut out = vec![0.0; m * n];
    let a = Operand { data: a, row_stride: 1, col_stride: m };
    let b = Operand { data: b, row_stride: n, col_stride: 1 };
    gemm(a, b, m, k, n, &mut out);
    out
}

/// Batched product over `batch` independent `m×k · k×n` pairs.
pub fn bmm(a: &[f64], b: &[f64], batch: usize, m: usize, k: usize, n: usize) -> Vec<f64> {
    let mut out = vec![0.0; batch * m * n];
    if m * n == 0 {
        return out;
    }
    let body = |(i, c): (usize, &mut [f64])| {
        matmul_into(
            &a[i * m * k..(i + 1) * m * k],
            &b[i * k * n..(i + 1) * k * n],
            m,
            k,
            n,
            c,
        );
    };
    if batch * m * k * n >= PAR_THRESHOLD {
        out.par_chunks_mut(m * n).enumerate().for_each(body);
    } else {
        out.chunks_mut(m * n).enumerate().for_each(body);
    }
    out
}

/// Per-batch transpose of the two trailing axes: `[batch, r, c] -> [batch, c, r]`.
pub fn batch_transpose(a: &[f64], batch: usize, rows: usize, cols: usize) -> Vec<f64> {
    let mut out = vec![0.0; a.len()];
    for bi in 0..batch {
        let off = bi * rows * cols;
        for i in 0..rows {
            for j in 0..cols {
                out[off + j * rows + i] = a[off + i * cols + j];
            }
        }
    }
    out
}

/// Geometry of a batched valid 1-D convolution.
#[derive(Clone, Copy, Debug)]
pub struct ConvDims {
    pub batch: usize,
    pub c_in: usize,
    pub len: usize,
    pub c_out: usize,
    pub kernel: usize,
}

impl ConvDims {
    pub fn out_len(&self) -> usize {
        self.len + 1 - self.kernel
    }
}

/// Unfolds `x[batch, c_in, len]` into columns `[c_in·kernel, batch·out_len]`.
fn im2col(x: &[f64], d: ConvDims) -> Vec<f64> {
    let lo = d.out_len();
    let cols = d.batch * lo;
    let mut out = vec![0.0; d.c_in * d.kernel * cols];
    out.par_chunks_mut(cols).enumerate().for_each(|(row, dst)| {
        let ci = row / d.kernel;
        let kk = row % d.kernel;
        for n in 0..d.batch {
            let src = &x[(n * d.c_in + ci) * d.len + kk..][..lo];
            dst[n * lo..(n + 1) * lo].copy_from_slice(src);
        }
    });
    out
}

pub fn conv1d_forward(x: &[f64], w: &[f64], bias: &[f64], d: ConvDims) -> Vec<f64> {
    let lo = d.out_len();
    let cols = im2col(x, d);
    // [c_out, batch·lo]
    let y = matmul(w, &cols, d.c_out, d.c_in * d.kernel, d.batch * lo);
    let mut out = vec![0.0; d.batch * d.c_out * lo];
    for n in 0..d.batch {
        for co in 0..d.c_out {
            let src = &y[co * d.batch * lo + n * lo..][..lo];
            let dst = &mut out[(n * d.c_out + co) * lo..][..lo];
            for (o, &s) in dst.iter_mut().zip(src) {
                *o = s + bias[co];
            }
        }
    }
    out
}

/// Gradients of a valid convolution. Returns `(dx, dw, dbias)`; `dx` is
/// skipped when `need_input` is false.
pub fn conv1d_backward(
    x: &[f64],
    w: &[f64],
    dout: &[f64],
    d: ConvDims,
    need_input: bool,
) -> (Option<Vec<f64>>, Vec<f64>, Vec<f64>) {
    let lo = d.out_len();
    let ck = d.c_in * d.kernel;
    let bl = d.batch * lo;
    // regroup dout [batch, c_out, lo] as [c_out, batch·lo]
    let mut dy = vec![0.0; d.c_out * bl];
    let mut dbias = vec![0.0; d.c_out];
    for n in 0..d.batch {
        for co in 0..d.c_out {
            let src = &dout[(n * d.c_out + co) * lo..][..lo];
            dy[co * bl + n * lo..][..lo].copy_from_slice(src);
        }
    }
    for co in 0..d.c_out {
        dbias[co] = dy[co * bl..(co + 1) * bl].iter().sum();
    }
    let cols = im2col(x, d);
    let dw = matmul_nt(&dy, &cols, d.c_out, bl, ck);
    let dx = need_input.then(|| {
        let dcols = matmul_tn(w, &dy, ck, d.c_out, bl);
        let mut dx = vec![0.0; x.len()];
        for n in 0..d.batch {
            for ci in 0..d.c_in {
                let dst = &mut dx[(n * d.c_in + ci) * d.len..][..d.len];
                for kk in 0..d.kernel {
                    let src = &dcols[(ci * d.kernel + kk) * bl + n * lo..][..lo];
                    for (o, &s) in dst[kk..kk + lo].iter_mut().zip(src) {
                        *o += s;
                    }
                }
            }
        }
        dx
    });
    (dx, dw, dbias)
}
