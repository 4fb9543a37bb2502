//! Elementwise and shape ops: ReLU, right edge-replication padding with its
//! crop inverse, and the mean reduction over the height axis.

use crate::error::{Error, Result};
use crate::kernel::tensor::TensorBatch;

/// ReLU forward. The returned mask records which inputs were positive so the
/// backward pass can gate gradients without keeping the input alive.
pub fn relu_batch(x: &TensorBatch) -> (TensorBatch, Vec<bool>) {
    let mut out = TensorBatch::zeros(x.n, x.c, x.h, x.l);
    let mut mask = vec![false; x.data.len()];
    for i in 0..x.data.len() {
        let v = x.data[i];
        if v > 0.0 {
            out.data[i] = v;
            mask[i] = true;
        }
    }
    (out, mask)
}

pub fn relu_backward_batch(grad_out: &TensorBatch, mask: &[bool]) -> Result<TensorBatch> {
    if mask.len() != grad_out.data.len() {
        return Err(Error::Shape(format!(
            "relu mask length {} does not match grad length {}",
            mask.len(),
            grad_out.data.len()
        )));
    }
    let mut gx = TensorBatch::zeros(grad_out.n, grad_out.c, grad_out.h, grad_out.l);
    for i in 0..mask.len() {
        if mask[i] {
            gx.data[i] = grad_out.data[i];
        }
    }
    Ok(gx)
}

/// Smallest multiple of `divisor` that is >= `len`.
pub fn padded_len(len: usize, divisor: usize) -> usize {
    assert!(divisor >= 1);
    len.div_ceil(divisor) * divisor
}

/// Pad on the right along the length axis by replicating the last column.
pub fn pad_right_edge(x: &TensorBatch, target_len: usize) -> Result<TensorBatch> {
    if target_len < x.l {
        return Err(Error::Shape(format!(
            "pad target {} is shorter than input length {}",
            target_len, x.l
        )));
    }
    if x.l == 0 {
        return Err(Error::Empty("cannot edge-pad a zero-length signal"));
    }
    let mut out = TensorBatch::zeros(x.n, x.c, x.h, target_len);
    let rows = x.n * x.c * x.h;
    for r in 0..rows {
        let src = &x.data[r * x.l..(r + 1) * x.l];
        let dst = &mut out.data[r * target_len..(r + 1) * target_len];
        dst[..x.l].copy_from_slice(src);
        let edge = src[x.l - 1];
        for v in &mut dst[x.l..] {
            *v = edge;
        }
    }
    Ok(out)
}

/// Backward of [`pad_right_edge`]: gradients of every replicated column fold
/// back into the last real column.
pub fn pad_right_edge_backward(grad_out: &TensorBatch, orig_len: usize) -> Result<TensorBatch> {
    if orig_len > grad_out.l || orig_len == 0 {
        return Err(Error::Shape(format!(
            "original length {} incompatible with padded length {}",
            orig_len, grad_out.l
        )));
    }
    let mut gx = TensorBatch::zeros(grad_out.n, grad_out.c, grad_out.h, orig_len);
    let rows = grad_out.n * grad_out.c * grad_out.h;
    for r in 0..rows {
        let src = &grad_out.data[r * grad_out.l..(r + 1) * grad_out.l];
        let dst = &mut gx.data[r * orig_len..(r + 1) * orig_len];
        dst.copy_from_slice(&src[..orig_len]);
        let mut tail = 0.0;
        for &g in &src[orig_len..] {
            tail += g;
        }
        dst[orig_len - 1] += tail;
    }
    Ok(gx)
}

/// Keep only the first `len` columns along the length axis.
pub fn crop_length(x: &TensorBatch, len: usize) -> Result<TensorBatch> {
    if len > x.l {
        return Err(Error::Shape(format!(
            "crop length {} exceeds input length {}",
            len, x.l
        )));
    }
    let mut out = TensorBatch::zeros(x.n, x.c, x.h, len);
    let rows = x.n * x.c * x.h;
    for r in 0..rows {
        out.data[r * len..(r + 1) * len]
            .copy_from_slice(&x.data[r * x.l..r * x.l + len]);
    }
    Ok(out)
}

/// Backward of [`crop_length`]: cropped columns get zero gradient.
pub fn crop_length_backward(grad_out: &TensorBatch, full_len: usize) -> Result<TensorBatch> {
    if grad_out.l > full_len {
        return Err(Error::Shape(format!(
            "crop grad length {} exceeds full length {}",
            grad_out.l, full_len
        )));
    }
    let mut gx = TensorBatch::zeros(grad_out.n, grad_out.c, grad_out.h, full_len);
    let rows = grad_out.n * grad_out.c * grad_out.h;
    for r in 0..rows {
        gx.data[r * full_len..r * full_len + grad_out.l]
            .copy_from_slice(&grad_out.data[r * grad_out.l..(r + 1) * grad_out.l]);
    }
    Ok(gx)
}

/// Mean over the height axis: (n, c, h, l) -> (n, c, 1, l).
pub fn mean_height(x: &TensorBatch) -> TensorBatch {
    let mut out = TensorBatch::zeros(x.n, x.c, 1, x.l);
    let inv = 1.0 / x.h as f64;
    for nb in 0..x.n {
        for ch in 0..x.c {
            let in_base = (nb * x.c + ch) * x.h * x.l;
            let out_base = (nb * x.c + ch) * x.l;
            for hh in 0..x.h {
                let row = in_base + hh * x.l;
                for li in 0..x.l {
                    out.data[out_base + li] += x.data[row + li];
                }
            }
            for li in 0..x.l {
                out.data[out_base + li] *= inv;
            }
        }
    }
    out
}

/// Backward of [`mean_height`]: broadcast dy/h to every height row.
pub fn mean_height_backward(grad_out: &TensorBatch, h: usize) -> Result<TensorBatch> {
    if grad_out.h != 1 {
        return Err(Error::Shape(format!(
            "mean_height grad must have height 1, got {}",
            grad_out.h
        )));
    }
    let mut gx = TensorBatch::zeros(grad_out.n, grad_out.c, h, grad_out.l);
    let inv = 1.0 / h as f64;
    for nb in 0..grad_out.n {
        for ch in 0..grad_out.c {
            let out_base = (nb * grad_out.c + ch) * grad_out.l;
            let in_base = (nb * grad_out.c + ch) * h * grad_out.l;
            for hh in 0..h {
                let row = in_base + hh * grad_out.l;
                for li in 0..grad_out.l {
                    gx.data[row + li] = grad_out.data[out_base + li] * inv;
                }
            }
        }
    }
    Ok(gx)
}
