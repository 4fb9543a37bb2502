//! Non-overlapping 1×k max pooling along the length axis.

use crate::error::{Error, Result};
use crate::kernel::tensor::{Tensor, TensorBatch};

/// Pooled output plus the flat input index of each selected maximum, which
/// the backward pass routes gradients through. Ties pick the leftmost
/// element so the choice is deterministic.
pub struct PoolOutput {
    pub output: TensorBatch,
    pub argmax: Vec<usize>,
}

pub fn maxpool_batch(x: &TensorBatch, k: usize) -> Result<PoolOutput> {
    assert!(k >= 1);
    if x.l % k != 0 {
        return Err(Error::PoolIndivisible { len: x.l, k });
    }
    let lo = x.l / k;
    let mut out = TensorBatch::zeros(x.n, x.c, x.h, lo);
    let mut argmax = vec![0usize; out.data.len()];
    let rows = x.n * x.c * x.h;
    for r in 0..rows {
        let in_row = r * x.l;
        let out_row = r * lo;
        for w in 0..lo {
            let start = in_row + w * k;
            let mut best = x.data[start];
            let mut best_i = start;
            for j in 1..k {
                let v = x.data[start + j];
                if v > best {
                    best = v;
                    best_i = start + j;
                }
            }
            out.data[out_row + w] = best;
            argmax[out_row + w] = best_i;
        }
    }
    Ok(PoolOutput {
        output: out,
        argmax,
    })
}

/// Scatter upstream gradients back to the positions that won the max.
pub fn maxpool_backward_batch(
    x_shape: (usize, usize, usize, usize),
    argmax: &[usize],
    grad_out: &TensorBatch,
) -> Result<TensorBatch> {
    if argmax.len() != grad_out.data.len() {
        return Err(Error::Shape(format!(
            "argmax length {} does not match grad_out length {}",
            argmax.len(),
            grad_out.data.len()
        )));
    }
    let (n, c, h, l) = x_shape;
    let mut gx = TensorBatch::zeros(n, c, h, l);
    for (i, &src) in argmax.iter().enumerate() {
        gx.data[src] += grad_out.data[i];
    }
    Ok(gx)
}

/// Max pooling of a single tensor; returns only the pooled values.
pub fn maxpool(input: &Tensor, k: usize) -> Result<Tensor> {
    let out = maxpool_batch(&input.to_batch(), k)?;
    Ok(out.output.unpack().remove(0))
}
