//! Slice-level numeric kernels shared by the graph ops and the no-grad
//! inference paths. Every reduction runs in a fixed sequential order, so
//! results are bit-reproducible.

use crate::error::{Error, Result};

/// Row-major matrix operand, optionally read as its transpose.
#[derive(Clone, Copy)]
pub struct MatRef<'a> {
    pub data: &'a [f64],
    pub rows: usize,
    pub cols: usize,
    pub transposed: bool,
}

impl<'a> MatRef<'a> {
    pub fn new(data: &'a [f64], rows: usize, cols: usize) -> Self {
        debug_assert_eq!(data.len(), rows * cols);
        Self {
            data,
            rows,
            cols,
            transposed: false,
        }
    }

    pub fn t(self) -> Self {
        Self {
            transposed: !self.transposed,
            ..self
        }
    }

    fn logical_rows(&self) -> usize {
        if self.transposed {
            self.cols
        } else {
            self.rows
        }
    }

    fn logical_cols(&self) -> usize {
        if self.transposed {
            self.rows
        } else {
            self.cols
        }
    }

    fn strides(&self) -> (isize, isize) {
        if self.transposed {
            (1, self.cols as isize)
        } else {
            (self.cols as isize, 1)
        }
    }
}

/// `out = beta * out + a * b` where `out` is a row-major `[m, n]` buffer.
pub fn gemm(a: MatRef<'_>, b: MatRef<'_>, out: &mut [f64], beta: f64) {
    let (m, k) = (a.logical_rows(), a.logical_cols());
    let n = b.logical_cols();
    assert_eq!(k, b.logical_rows(), "gemm inner dimensions");
    assert_eq!(out.len(), m * n, "gemm output size");
    if m == 0 || n == 0 {
        return;
    }
    if k == 0 {
        out.iter_mut().for_each(|v| *v *= beta);
        return;
    }
    let (rsa, csa) = a.strides();
    let (rsb, csb) = b.strides();
    // SAFETY: the operands are borrowed slices whose lengths match the
    // logical shapes asserted above; `out` is exclusively borrowed.
    unsafe {
        matrixmultiply::dgemm(
            m,
            k,
            n,
            1.0,
            a.data.as_ptr(),
            rsa,
            csa,
            b.data.as_ptr(),
            rsb,
            csb,
            beta,
            out.as_mut_ptr(),
            n as isize,
            1,
        );
    }
}

/// `x [rows, in] * w^T [in, out] + bias`, row-major output `[rows, out]`.
pub fn linear_forward(x: &[f64], rows: usize, w: &[f64], out_dim: usize, bias: &[f64]) -> Vec<f64> {
    let in_dim = w.len() / out_dim.max(1);
    let mut out = Vec::with_capacity(rows * out_dim);
    for _ in 0..rows {
        out.extend_from_slice(bias);
    }
    gemm(
        MatRef::new(x, rows, in_dim),
        MatRef::new(w, out_dim, in_dim).t(),
        &mut out,
        1.0,
    );
    out
}

/// Result shape of broadcasting two shapes with trailing-axis alignment.
/// Each aligned pair must be equal or contain a 1.
pub fn broadcast_shape(op: &'static str, a: &[usize], b: &[usize]) -> Result<Vec<usize>> {
    let nd = a.len().max(b.len());
    let mut out = vec![0; nd];
    for i in 0..nd {
        let da = if i < nd - a.len() { 1 } else { a[i - (nd - a.len())] };
        let db = if i < nd - b.len() { 1 } else { b[i - (nd - b.len())] };
        out[i] = if da == db {
            da
        } else if da == 1 {
            db
        } else if db == 1 {
            da
        } else {
            return Err(Error::shape(op, a, b));
        };
    }
    Ok(out)
}

/// For every flat index of `out_shape`, the flat index into an operand of
/// shape `src` broadcast against it.
pub fn broadcast_index(src: &[usize], out_shape: &[usize]) -> Vec<usize> {
    let nd = out_shape.len();
    let offset = nd - src.len();
    // strides of src aligned to the output axes, 0 on broadcast axes
    let mut strides = vec![0usize; nd];
    let mut acc = 1;
    for i in (0..src.len()).rev() {
        strides[i + offset] = if src[i] == 1 { 0 } else { acc };
        acc *= src[i];
    }
    let total: usize = out_shape.iter().product();
    let mut idx = Vec::with_capacity(total);
    let mut counter = vec![0usize; nd];
    let mut flat = 0usize;
    for _ in 0..total {
        idx.push(flat);
        for ax in (0..nd).rev() {
            counter[ax] += 1;
            flat += strides[ax];
            if counter[ax] < out_shape[ax] {
                break;
            }
            flat -= strides[ax] * counter[ax];
            counter[ax] = 0;
        }
    }
    idx
}

/// Sums `data` of `shape` over the listed axes (sorted, unique), dropping them.
pub fn reduce_sum(data: &[f64], shape: &[usize], axes: &[usize]) -> (Vec<f64>, Vec<usize>) {
    let out_shape: Vec<usize> = shape
        .iter()
        .enumerate()
        .filter(|(i, _)| !axes.contains(i))
        .map(|(_, &d)| d)
        .collect();
    // keep-dim shape, used to map input positions to output positions
    let kept: Vec<usize> = shape
        .iter()
        .enumerate()
        .map(|(i, &d)| if axes.contains(&i) { 1 } else { d })
        .collect();
    let map = broadcast_index(&kept, shape);
    let mut out = vec![0.0; out_shape.iter().product()];
    for (v, &o) in data.iter().zip(&map) {
        out[o] += v;
    }
    (out, out_shape)
}

/// Validates and normalizes an axis list for a tensor of rank `ndim`.
pub fn normalize_axes(op: &'static str, axes: &[usize], ndim: usize) -> Result<Vec<usize>> {
    let mut v = axes.to_vec();
    v.sort_unstable();
    v.dedup();
    if v.len() != axes.len() || v.iter().any(|&a| a >= ndim) {
        return Err(Error::InvalidShape {
            op,
            msg: format!("invalid axes {axes:?} for rank {ndim}"),
        });
    }
    Ok(v)
}
