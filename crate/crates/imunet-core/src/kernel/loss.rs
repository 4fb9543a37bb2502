//! Per-sample softmax cross-entropy over the class channel, averaged across
//! every labeled position in the batch.

use crate::error::{Error, Result};
use crate::kernel::tensor::TensorBatch;

/// Mean cross-entropy and its gradient w.r.t. the logits.
///
/// Logits are (n, classes, 1, l); labels are row-major (n, l) class indices.
/// The softmax subtracts the rowwise max before exponentiating so large
/// logits stay finite.
pub fn softmax_cross_entropy(
    logits: &TensorBatch,
    labels: &[u8],
) -> Result<(f64, TensorBatch)> {
    if logits.h != 1 {
        return Err(Error::Shape(format!(
            "logits must have height 1, got {}",
            logits.h
        )));
    }
    if labels.len() != logits.n * logits.l {
        return Err(Error::Shape(format!(
            "label count {} does not match {} positions",
            labels.len(),
            logits.n * logits.l
        )));
    }
    let (n, c, _, l) = logits.shape();
    if n * l == 0 {
        return Err(Error::Empty("loss over zero positions"));
    }
    let mut grad = TensorBatch::zeros(n, c, 1, l);
    let inv = 1.0 / (n * l) as f64;
    let mut total = 0.0;

    for nb in 0..n {
        for li in 0..l {
            let label = labels[nb * l + li] as usize;
            if label >= c {
                return Err(Error::BadLabel(labels[nb * l + li] as i64));
            }
            let mut max = f64::NEG_INFINITY;
            for ch in 0..c {
                max = max.max(logits.data[(nb * c + ch) * l + li]);
            }
            let mut sum = 0.0;
            for ch in 0..c {
                sum += (logits.data[(nb * c + ch) * l + li] - max).exp();
            }
            let log_sum = sum.ln() + max;
            total += log_sum - logits.data[(nb * c + label) * l + li];
            for ch in 0..c {
                let p = (logits.data[(nb * c + ch) * l + li] - log_sum).exp();
                let y = if ch == label { 1.0 } else { 0.0 };
                grad.data[(nb * c + ch) * l + li] = (p - y) * inv;
            }
        }
    }
    Ok((total * inv, grad))
}

/// Class with the highest logit at each position; ties pick the lowest
/// class index.
pub fn argmax_classes(logits: &TensorBatch) -> Result<Vec<u8>> {
    if logits.h != 1 {
        return Err(Error::Shape(format!(
            "logits must have height 1, got {}",
            logits.h
        )));
    }
    let (n, c, _, l) = logits.shape();
    let mut out = Vec::with_capacity(n * l);
    for nb in 0..n {
        for li in 0..l {
            let mut best = 0usize;
            let mut best_v = logits.data[(nb * c) * l + li];
            for ch in 1..c {
                let v = logits.data[(nb * c + ch) * l + li];
                if v > best_v {
                    best_v = v;
                    best = ch;
                }
            }
            out.push(best as u8);
        }
    }
    Ok(out)
}
