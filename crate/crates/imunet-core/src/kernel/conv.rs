//! 2-D convolution with same-zero padding and the non-overlapping transposed
//! convolution used for temporal upsampling.
//!
//! Inner loops run along the length axis on contiguous rows so the compiler
//! can vectorize them; everything accumulates in f64.

use crate::error::{Error, Result};
use crate::kernel::tensor::{Tensor, TensorBatch};

/// Convolution filter bank: weights (out_ch, in_ch, kh, kw) plus one bias per
/// output channel.
#[derive(Debug, Clone, PartialEq)]
pub struct ConvParams {
    pub out_ch: usize,
    pub in_ch: usize,
    pub kh: usize,
    pub kw: usize,
    pub weights: Vec<f64>,
    pub bias: Vec<f64>,
}

impl ConvParams {
    pub fn new(out_ch: usize, in_ch: usize, kh: usize, kw: usize) -> Self {
        assert!(out_ch >= 1 && in_ch >= 1 && kh >= 1 && kw >= 1);
        ConvParams {
            out_ch,
            in_ch,
            kh,
            kw,
            weights: vec![0.0; out_ch * in_ch * kh * kw],
            bias: vec![0.0; out_ch],
        }
    }

    pub fn from_parts(
        out_ch: usize,
        in_ch: usize,
        kh: usize,
        kw: usize,
        weights: Vec<f64>,
        bias: Vec<f64>,
    ) -> Result<Self> {
        if weights.len() != out_ch * in_ch * kh * kw {
            return Err(Error::Shape(format!(
                "weight length {} does not match {}x{}x{}x{}",
                weights.len(),
                out_ch,
                in_ch,
                kh,
                kw
            )));
        }
        if bias.len() != out_ch {
            return Err(Error::Shape(format!(
                "bias length {} does not match out_ch {}",
                bias.len(),
                out_ch
            )));
        }
        Ok(ConvParams {
            out_ch,
            in_ch,
            kh,
            kw,
            weights,
            bias,
        })
    }

    #[inline]
    fn w_idx(&self, oc: usize, ic: usize, i: usize, j: usize) -> usize {
        ((oc * self.in_ch + ic) * self.kh + i) * self.kw + j
    }

    pub fn num_params(&self) -> usize {
        self.weights.len() + self.bias.len()
    }
}

/// Valid output range for a kernel column offset `d` (l_in = l_out + d):
/// l_out in [max(0, -d), min(l, l - d)).
#[inline]
fn valid_range(l: usize, d: isize) -> (usize, usize) {
    let lo = if d < 0 { (-d) as usize } else { 0 };
    let hi = if d > 0 { l.saturating_sub(d as usize) } else { l };
    (lo.min(l), hi)
}

/// Batched same-padded convolution. Output keeps the spatial size of the
/// input; zero padding of (kh-1)/2 rows and (kw-1)/2 columns.
pub fn conv2d_batch(x: &TensorBatch, p: &ConvParams) -> Result<TensorBatch> {
    if x.c != p.in_ch {
        return Err(Error::ChannelMismatch {
            input: x.c,
            expected: p.in_ch,
        });
    }
    let (n, h, l) = (x.n, x.h, x.l);
    let pad_h = (p.kh - 1) / 2;
    let pad_w = (p.kw - 1) / 2;
    let mut out = TensorBatch::zeros(n, p.out_ch, h, l);

    for nb in 0..n {
        for oc in 0..p.out_ch {
            let out_base = (nb * p.out_ch + oc) * h * l;
            out.data[out_base..out_base + h * l].fill(p.bias[oc]);
            for ic in 0..p.in_ch {
                let in_base = (nb * p.in_ch + ic) * h * l;
                for ki in 0..p.kh {
                    let dh = ki as isize - pad_h as isize;
                    for kj in 0..p.kw {
                        let w = p.weights[p.w_idx(oc, ic, ki, kj)];
                        if w == 0.0 {
                            continue;
                        }
                        let dw = kj as isize - pad_w as isize;
                        let (lo, hi) = valid_range(l, dw);
                        if lo >= hi {
                            continue;
                        }
                        for ho in 0..h {
                            let hi_in = ho as isize + dh;
                            if hi_in < 0 || hi_in >= h as isize {
                                continue;
                            }
                            let in_row = in_base + (hi_in as usize) * l;
                            let out_row = out_base + ho * l;
                            // l_in = l_out + dw, non-negative for l_out >= lo
                            let src_start = (in_row as isize + lo as isize + dw) as usize;
                            let src = &x.data[src_start..src_start + (hi - lo)];
                            let dst = &mut out.data[out_row + lo..out_row + hi];
                            for (o, &i) in dst.iter_mut().zip(src.iter()) {
                                *o += w * i;
                            }
                        }
                    }
                }
            }
        }
    }
    Ok(out)
}

/// Gradients of a same-padded convolution.
pub struct ConvGrads {
    pub input: TensorBatch,
    pub weights: Vec<f64>,
    pub bias: Vec<f64>,
}

/// Backward pass: gradients w.r.t. input, weights, and bias given the
/// upstream gradient over the output.
pub fn conv2d_backward_batch(
    x: &TensorBatch,
    p: &ConvParams,
    grad_out: &TensorBatch,
) -> Result<ConvGrads> {
    if grad_out.shape() != (x.n, p.out_ch, x.h, x.l) {
        return Err(Error::Shape(format!(
            "grad_out shape {:?} does not match conv output {:?}",
            grad_out.shape(),
            (x.n, p.out_ch, x.h, x.l)
        )));
    }
    let (n, h, l) = (x.n, x.h, x.l);
    let pad_h = (p.kh - 1) / 2;
    let pad_w = (p.kw - 1) / 2;
    let mut gx = TensorBatch::zeros(n, x.c, h, l);
    let mut gw = vec![0.0; p.weights.len()];
    let mut gb = vec![0.0; p.out_ch];

    for nb in 0..n {
        for oc in 0..p.out_ch {
            let out_base = (nb * p.out_ch + oc) * h * l;
            let g_out_plane = &grad_out.data[out_base..out_base + h * l];
            gb[oc] += g_out_plane.iter().sum::<f64>();
            for ic in 0..p.in_ch {
                let in_base = (nb * p.in_ch + ic) * h * l;
                for ki in 0..p.kh {
                    let dh = ki as isize - pad_h as isize;
                    for kj in 0..p.kw {
                        let dw = kj as isize - pad_w as isize;
                        let w = p.weights[p.w_idx(oc, ic, ki, kj)];
                        let (lo, hi) = valid_range(l, dw);
                        if lo >= hi {
                            continue;
                        }
                        let mut acc = 0.0;
                        for ho in 0..h {
                            let hi_in = ho as isize + dh;
                            if hi_in < 0 || hi_in >= h as isize {
                                continue;
                            }
                            let in_row = in_base + (hi_in as usize) * l;
                            let out_row = ho * l;
                            let in_start = (in_row as isize + lo as isize + dw) as usize;
                            let g_row = &g_out_plane[out_row + lo..out_row + hi];
                            let x_row = &x.data[in_start..in_start + (hi - lo)];
                            // weight gradient: correlation of input with grad_out
                            for (&g, &i) in g_row.iter().zip(x_row.iter()) {
                                acc += g * i;
                            }
                            // input gradient: scatter w * grad_out back
                            if w != 0.0 {
                                let gx_row =
                                    &mut gx.data[in_start..in_start + (hi - lo)];
                                for (gi, &g) in gx_row.iter_mut().zip(g_row.iter()) {
                                    *gi += w * g;
                                }
                            }
                        }
                        gw[p.w_idx(oc, ic, ki, kj)] += acc;
                    }
                }
            }
        }
    }
    Ok(ConvGrads {
        input: gx,
        weights: gw,
        bias: gb,
    })
}

/// Same-padded convolution of a single tensor.
pub fn conv2d(input: &Tensor, params: &ConvParams) -> Result<Tensor> {
    let out = conv2d_batch(&input.to_batch(), params)?;
    Ok(out.unpack().remove(0))
}

/// Backward of [`conv2d`] for a single tensor.
pub fn conv2d_backward(
    input: &Tensor,
    params: &ConvParams,
    grad_out: &Tensor,
) -> Result<(Tensor, Vec<f64>, Vec<f64>)> {
    let g = conv2d_backward_batch(&input.to_batch(), params, &grad_out.to_batch())?;
    Ok((g.input.unpack().remove(0), g.weights, g.bias))
}

/// Batched transposed convolution with kernel 1×k and stride 1×k: each input
/// sample expands into k output samples, so the length grows exactly k-fold.
pub fn transposed_conv_batch(x: &TensorBatch, p: &ConvParams) -> Result<TensorBatch> {
    if x.c != p.in_ch {
        return Err(Error::ChannelMismatch {
            input: x.c,
            expected: p.in_ch,
        });
    }
    if p.kh != 1 {
        return Err(Error::Shape(format!(
            "transposed conv expects 1xk kernel, got {}x{}",
            p.kh, p.kw
        )));
    }
    let k = p.kw;
    let (n, h, l) = (x.n, x.h, x.l);
    let lo = l * k;
    let mut out = TensorBatch::zeros(n, p.out_ch, h, lo);

    for nb in 0..n {
        for oc in 0..p.out_ch {
            let out_base = (nb * p.out_ch + oc) * h * lo;
            out.data[out_base..out_base + h * lo].fill(p.bias[oc]);
            for ic in 0..p.in_ch {
                let in_base = (nb * p.in_ch + ic) * h * l;
                for j in 0..k {
                    let w = p.weights[p.w_idx(oc, ic, 0, j)];
                    if w == 0.0 {
                        continue;
                    }
                    for ho in 0..h {
                        let in_row = &x.data[in_base + ho * l..in_base + (ho + 1) * l];
                        let out_row = out_base + ho * lo;
                        for (li, &v) in in_row.iter().enumerate() {
                            out.data[out_row + li * k + j] += w * v;
                        }
                    }
                }
            }
        }
    }
    Ok(out)
}

/// Backward pass of the non-overlapping transposed convolution.
pub fn transposed_conv_backward_batch(
    x: &TensorBatch,
    p: &ConvParams,
    grad_out: &TensorBatch,
) -> Result<ConvGrads> {
    let k = p.kw;
    if grad_out.shape() != (x.n, p.out_ch, x.h, x.l * k) {
        return Err(Error::Shape(format!(
            "grad_out shape {:?} does not match transposed conv output {:?}",
            grad_out.shape(),
            (x.n, p.out_ch, x.h, x.l * k)
        )));
    }
    let (n, h, l) = (x.n, x.h, x.l);
    let lo = l * k;
    let mut gx = TensorBatch::zeros(n, x.c, h, l);
    let mut gw = vec![0.0; p.weights.len()];
    let mut gb = vec![0.0; p.out_ch];

    for nb in 0..n {
        for oc in 0..p.out_ch {
            let out_base = (nb * p.out_ch + oc) * h * lo;
            let g_plane = &grad_out.data[out_base..out_base + h * lo];
            gb[oc] += g_plane.iter().sum::<f64>();
            for ic in 0..p.in_ch {
                let in_base = (nb * p.in_ch + ic) * h * l;
                for j in 0..k {
                    let w = p.weights[p.w_idx(oc, ic, 0, j)];
                    let mut acc = 0.0;
                    for ho in 0..h {
                        let g_row = &g_plane[ho * lo..(ho + 1) * lo];
                        let x_row = &x.data[in_base + ho * l..in_base + (ho + 1) * l];
                        let gx_row = &mut gx.data[in_base + ho * l..in_base + (ho + 1) * l];
                        for li in 0..l {
                            let g = g_row[li * k + j];
                            acc += g * x_row[li];
                            gx_row[li] += w * g;
                        }
                    }
                    gw[p.w_idx(oc, ic, 0, j)] += acc;
                }
            }
        }
    }
    Ok(ConvGrads {
        input: gx,
        weights: gw,
        bias: gb,
    })
}

/// Transposed convolution of a single tensor.
pub fn transposed_conv(input: &Tensor, params: &ConvParams) -> Result<Tensor> {
    let out = transposed_conv_batch(&input.to_batch(), params)?;
    Ok(out.unpack().remove(0))
}
