//! Dense rank-3 tensors (channels × height × length) and their batched form.
//!
//! `Tensor` is the carrier between layers: row-major by (c, h, l), with an
//! optional gradient slot of identical shape. `TensorBatch` prepends a batch
//! dimension and is what the network layers actually run on; a `Tensor` is a
//! batch of one.

use crate::error::{Error, Result};

/// Rank-3 tensor, row-major by (channel, height, length).
#[derive(Debug, Clone, PartialEq)]
pub struct Tensor {
    pub c: usize,
    pub h: usize,
    pub l: usize,
    pub data: Vec<f64>,
    pub grad: Option<Vec<f64>>,
}

impl Tensor {
    /// Zero-filled tensor of the given shape.
    pub fn zeros(c: usize, h: usize, l: usize) -> Self {
        Tensor {
            c,
            h,
            l,
            data: vec![0.0; c * h * l],
            grad: None,
        }
    }

    /// Builds a tensor from existing data; fails if the length does not
    /// match c·h·l.
    pub fn from_data(c: usize, h: usize, l: usize, data: Vec<f64>) -> Result<Self> {
        if data.len() != c * h * l {
            return Err(Error::Shape(format!(
                "data length {} does not match shape {}x{}x{} = {}",
                data.len(),
                c,
                h,
                l,
                c * h * l
            )));
        }
        Ok(Tensor {
            c,
            h,
            l,
            data,
            grad: None,
        })
    }

    pub fn shape(&self) -> (usize, usize, usize) {
        (self.c, self.h, self.l)
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    #[inline]
    pub fn idx(&self, c: usize, h: usize, l: usize) -> usize {
        (c * self.h + h) * self.l + l
    }

    #[inline]
    pub fn at(&self, c: usize, h: usize, l: usize) -> f64 {
        self.data[self.idx(c, h, l)]
    }

    #[inline]
    pub fn at_mut(&mut self, c: usize, h: usize, l: usize) -> &mut f64 {
        let i = self.idx(c, h, l);
        &mut self.data[i]
    }

    /// Attaches a gradient buffer of identical shape.
    pub fn set_grad(&mut self, grad: Vec<f64>) -> Result<()> {
        if grad.len() != self.data.len() {
            return Err(Error::Shape(format!(
                "grad length {} does not match data length {}",
                grad.len(),
                self.data.len()
            )));
        }
        self.grad = Some(grad);
        Ok(())
    }

    /// Wraps this tensor as a batch of one (data is copied).
    pub fn to_batch(&self) -> TensorBatch {
        TensorBatch {
            n: 1,
            c: self.c,
            h: self.h,
            l: self.l,
            data: self.data.clone(),
        }
    }
}

/// Batched rank-4 buffer, row-major by (n, c, h, l).
#[derive(Debug, Clone, PartialEq)]
pub struct TensorBatch {
    pub n: usize,
    pub c: usize,
    pub h: usize,
    pub l: usize,
    pub data: Vec<f64>,
}

impl TensorBatch {
    pub fn zeros(n: usize, c: usize, h: usize, l: usize) -> Self {
        TensorBatch {
            n,
            c,
            h,
            l,
            data: vec![0.0; n * c * h * l],
        }
    }

    /// Packs per-sample tensors into one batch buffer. All samples must share
    /// a shape.
    pub fn pack(samples: &[Tensor]) -> Result<Self> {
        let first = samples.first().ok_or(Error::Empty("batch"))?;
        let (c, h, l) = first.shape();
        let mut data = Vec::with_capacity(samples.len() * c * h * l);
        for s in samples {
            if s.shape() != (c, h, l) {
                return Err(Error::Shape(format!(
                    "batch sample shape {:?} differs from first sample {:?}",
                    s.shape(),
                    (c, h, l)
                )));
            }
            data.extend_from_slice(&s.data);
        }
        Ok(TensorBatch {
            n: samples.len(),
            c,
            h,
            l,
            data,
        })
    }

    /// Splits the batch back into per-sample tensors.
    pub fn unpack(&self) -> Vec<Tensor> {
        let stride = self.c * self.h * self.l;
        (0..self.n)
            .map(|i| Tensor {
                c: self.c,
                h: self.h,
                l: self.l,
                data: self.data[i * stride..(i + 1) * stride].to_vec(),
                grad: None,
            })
            .collect()
    }

    pub fn sample_len(&self) -> usize {
        self.c * self.h * self.l
    }

    #[inline]
    pub fn idx(&self, n: usize, c: usize, h: usize, l: usize) -> usize {
        ((n * self.c + c) * self.h + h) * self.l + l
    }

    #[inline]
    pub fn at(&self, n: usize, c: usize, h: usize, l: usize) -> f64 {
        self.data[self.idx(n, c, h, l)]
    }

    pub fn shape(&self) -> (usize, usize, usize, usize) {
        (self.n, self.c, self.h, self.l)
    }
}

/// Concatenates two tensors along the channel axis: a's channels first.
pub fn concat_channels(a: &Tensor, b: &Tensor) -> Result<Tensor> {
    if a.h != b.h || a.l != b.l {
        return Err(Error::Shape(format!(
            "concat requires equal spatial dims, got {}x{} and {}x{}",
            a.h, a.l, b.h, b.l
        )));
    }
    let mut data = Vec::with_capacity((a.c + b.c) * a.h * a.l);
    data.extend_from_slice(&a.data);
    data.extend_from_slice(&b.data);
    Tensor::from_data(a.c + b.c, a.h, a.l, data)
}

/// Batched channel concatenation.
pub fn concat_channels_batch(a: &TensorBatch, b: &TensorBatch) -> Result<TensorBatch> {
    if a.n != b.n || a.h != b.h || a.l != b.l {
        return Err(Error::Shape(format!(
            "concat requires equal batch/spatial dims, got {:?} and {:?}",
            a.shape(),
            b.shape()
        )));
    }
    let mut out = TensorBatch::zeros(a.n, a.c + b.c, a.h, a.l);
    let plane = a.h * a.l;
    for n in 0..a.n {
        let dst = ((n * out.c) * plane)..((n * out.c + a.c) * plane);
        let src = (n * a.c * plane)..((n + 1) * a.c * plane);
        out.data[dst].copy_from_slice(&a.data[src]);
        let dst = ((n * out.c + a.c) * plane)..((n + 1) * out.c * plane);
        let src = (n * b.c * plane)..((n + 1) * b.c * plane);
        out.data[dst].copy_from_slice(&b.data[src]);
    }
    Ok(out)
}

/// Splits a batch along the channel axis into (first `c_split` channels, rest).
/// Inverse of `concat_channels_batch`.
pub fn split_channels_batch(x: &TensorBatch, c_split: usize) -> (TensorBatch, TensorBatch) {
    assert!(c_split <= x.c, "split point beyond channel count");
    let plane = x.h * x.l;
    let mut a = TensorBatch::zeros(x.n, c_split, x.h, x.l);
    let mut b = TensorBatch::zeros(x.n, x.c - c_split, x.h, x.l);
    for n in 0..x.n {
        let base = n * x.c * plane;
        a.data[n * c_split * plane..(n + 1) * c_split * plane]
            .copy_from_slice(&x.data[base..base + c_split * plane]);
        b.data[n * (x.c - c_split) * plane..(n + 1) * (x.c - c_split) * plane]
            .copy_from_slice(&x.data[base + c_split * plane..base + x.c * plane]);
    }
    (a, b)
}
