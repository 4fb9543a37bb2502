//! Batch normalization over the (batch, height, length) extent of each
//! channel, with running statistics for inference.

use crate::error::{Error, Result};
use crate::kernel::tensor::TensorBatch;

pub const BN_EPS: f64 = 1e-5;
pub const BN_MOMENTUM: f64 = 0.1;

/// Learnable scale/shift plus running statistics. Variance is the biased
/// (population) estimate both for normalization and for the running update.
#[derive(Debug, Clone, PartialEq)]
pub struct BatchNormParams {
    pub ch: usize,
    pub gamma: Vec<f64>,
    pub beta: Vec<f64>,
    pub running_mean: Vec<f64>,
    pub running_var: Vec<f64>,
    pub eps: f64,
    pub momentum: f64,
}

impl BatchNormParams {
    pub fn new(ch: usize) -> Self {
        BatchNormParams {
            ch,
            gamma: vec![1.0; ch],
            beta: vec![0.0; ch],
            running_mean: vec![0.0; ch],
            running_var: vec![1.0; ch],
            eps: BN_EPS,
            momentum: BN_MOMENTUM,
        }
    }

    /// Learnable parameter count (running stats are state, not parameters).
    pub fn num_params(&self) -> usize {
        self.gamma.len() + self.beta.len()
    }
}

/// Values the backward pass needs from a training-mode forward.
pub struct BatchNormCache {
    pub xhat: Vec<f64>,
    pub inv_std: Vec<f64>,
    pub mean: Vec<f64>,
}

fn check_channels(x: &TensorBatch, p: &BatchNormParams) -> Result<()> {
    if x.c != p.ch {
        return Err(Error::ChannelMismatch {
            input: x.c,
            expected: p.ch,
        });
    }
    Ok(())
}

/// Training-mode forward: normalize with the batch statistics and fold them
/// into the running estimates.
pub fn batchnorm_train(
    x: &TensorBatch,
    p: &mut BatchNormParams,
) -> Result<(TensorBatch, BatchNormCache)> {
    check_channels(x, p)?;
    let (n, c, h, l) = x.shape();
    let plane = h * l;
    let m = (n * plane) as f64;
    let mut out = TensorBatch::zeros(n, c, h, l);
    let mut xhat = vec![0.0; x.data.len()];
    let mut inv_std = vec![0.0; c];
    let mut means = vec![0.0; c];

    for ch in 0..c {
        let mut sum = 0.0;
        for nb in 0..n {
            let base = (nb * c + ch) * plane;
            for v in &x.data[base..base + plane] {
                sum += v;
            }
        }
        let mean = sum / m;
        let mut var_sum = 0.0;
        for nb in 0..n {
            let base = (nb * c + ch) * plane;
            for v in &x.data[base..base + plane] {
                let d = v - mean;
                var_sum += d * d;
            }
        }
        let var = var_sum / m;
        let istd = 1.0 / (var + p.eps).sqrt();
        inv_std[ch] = istd;
        means[ch] = mean;
        let (g, b) = (p.gamma[ch], p.beta[ch]);
        for nb in 0..n {
            let base = (nb * c + ch) * plane;
            for i in base..base + plane {
                let xn = (x.data[i] - mean) * istd;
                xhat[i] = xn;
                out.data[i] = g * xn + b;
            }
        }
        p.running_mean[ch] = (1.0 - p.momentum) * p.running_mean[ch] + p.momentum * mean;
        p.running_var[ch] = (1.0 - p.momentum) * p.running_var[ch] + p.momentum * var;
    }
    Ok((
        out,
        BatchNormCache {
            xhat,
            inv_std,
            mean: means,
        },
    ))
}

/// Inference-mode forward: normalize with the running statistics only.
pub fn batchnorm_eval(x: &TensorBatch, p: &BatchNormParams) -> Result<TensorBatch> {
    check_channels(x, p)?;
    let (n, c, h, l) = x.shape();
    let plane = h * l;
    let mut out = TensorBatch::zeros(n, c, h, l);
    for ch in 0..c {
        let istd = 1.0 / (p.running_var[ch] + p.eps).sqrt();
        let scale = p.gamma[ch] * istd;
        let shift = p.beta[ch] - p.running_mean[ch] * scale;
        for nb in 0..n {
            let base = (nb * c + ch) * plane;
            for i in base..base + plane {
                out.data[i] = scale * x.data[i] + shift;
            }
        }
    }
    Ok(out)
}

/// Gradients from a training-mode forward.
pub struct BatchNormGrads {
    pub input: TensorBatch,
    pub gamma: Vec<f64>,
    pub beta: Vec<f64>,
}

/// Training-mode backward through the batch statistics.
pub fn batchnorm_backward(
    grad_out: &TensorBatch,
    p: &BatchNormParams,
    cache: &BatchNormCache,
) -> Result<BatchNormGrads> {
    check_channels(grad_out, p)?;
    let (n, c, h, l) = grad_out.shape();
    let plane = h * l;
    let m = (n * plane) as f64;
    let mut gx = TensorBatch::zeros(n, c, h, l);
    let mut g_gamma = vec![0.0; c];
    let mut g_beta = vec![0.0; c];

    for ch in 0..c {
        let mut sum_dy = 0.0;
        let mut sum_dy_xhat = 0.0;
        for nb in 0..n {
            let base = (nb * c + ch) * plane;
            for i in base..base + plane {
                let dy = grad_out.data[i];
                sum_dy += dy;
                sum_dy_xhat += dy * cache.xhat[i];
            }
        }
        g_gamma[ch] = sum_dy_xhat;
        g_beta[ch] = sum_dy;
        // dx = gamma * istd / m * (m*dy - sum(dy) - xhat * sum(dy*xhat))
        let k = p.gamma[ch] * cache.inv_std[ch] / m;
        for nb in 0..n {
            let base = (nb * c + ch) * plane;
            for i in base..base + plane {
                let dy = grad_out.data[i];
                gx.data[i] = k * (m * dy - sum_dy - cache.xhat[i] * sum_dy_xhat);
            }
        }
    }
    Ok(BatchNormGrads {
        input: gx,
        gamma: g_gamma,
        beta: g_beta,
    })
}
