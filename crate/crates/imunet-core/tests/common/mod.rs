//! Shared helpers for the integration suites: naive reference
//! implementations written as direct nested loops, independent of the
//! library kernels, plus seeded fixture builders.

#![allow(dead_code)]

use imunet_core::datapipe::{
    downsample_random, merge_window_sets, normalize, segment_windows, synchronize_labels,
    WindowMode, WindowSet,
};
use imunet_core::kernel::{conv2d_batch, maxpool_batch, transposed_conv_batch, ConvParams, TensorBatch};
use imunet_core::metrics::GaitMetrics;
use imunet_core::synth::synth_dataset;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha12Rng;

pub fn rng(seed: u64) -> ChaCha12Rng {
    ChaCha12Rng::seed_from_u64(seed)
}

pub fn rand_batch(r: &mut ChaCha12Rng, n: usize, c: usize, h: usize, l: usize) -> TensorBatch {
    let mut x = TensorBatch::zeros(n, c, h, l);
    for v in &mut x.data {
        *v = r.gen_range(-1.0..1.0);
    }
    x
}

pub fn rand_conv(
    r: &mut ChaCha12Rng,
    out_ch: usize,
    in_ch: usize,
    kh: usize,
    kw: usize,
) -> ConvParams {
    let weights = (0..out_ch * in_ch * kh * kw)
        .map(|_| r.gen_range(-1.0..1.0))
        .collect();
    let bias = (0..out_ch).map(|_| r.gen_range(-1.0..1.0)).collect();
    ConvParams::from_parts(out_ch, in_ch, kh, kw, weights, bias).expect("lengths match")
}

fn w_at(p: &ConvParams, oc: usize, ic: usize, ki: usize, kj: usize) -> f64 {
    p.weights[((oc * p.in_ch + ic) * p.kh + ki) * p.kw + kj]
}

/// Same-padded convolution as four explicit output loops with a bounds
/// check per tap. Padding is (kh-1)/2 rows and (kw-1)/2 columns of zeros.
pub fn naive_conv2d(x: &TensorBatch, p: &ConvParams) -> Vec<f64> {
    assert_eq!(x.c, p.in_ch);
    let (n, h, l) = (x.n, x.h, x.l);
    let (ph, pw) = ((p.kh as isize - 1) / 2, (p.kw as isize - 1) / 2);
    let mut out = vec![0.0; n * p.out_ch * h * l];
    for nb in 0..n {
        for oc in 0..p.out_ch {
            for i in 0..h {
                for j in 0..l {
                    let mut acc = p.bias[oc];
                    for ic in 0..p.in_ch {
                        for ki in 0..p.kh {
                            for kj in 0..p.kw {
                                let ii = i as isize + ki as isize - ph;
                                let jj = j as isize + kj as isize - pw;
                                if ii < 0 || jj < 0 || ii >= h as isize || jj >= l as isize {
                                    continue;
                                }
                                acc += w_at(p, oc, ic, ki, kj)
                                    * x.at(nb, ic, ii as usize, jj as usize);
                            }
                        }
                    }
                    out[((nb * p.out_ch + oc) * h + i) * l + j] = acc;
                }
            }
        }
    }
    out
}

/// Non-overlapping 1 x k transposed convolution: each input column expands
/// into k output columns, output length l * k, bias everywhere.
pub fn naive_transposed_conv(x: &TensorBatch, p: &ConvParams) -> Vec<f64> {
    assert_eq!(x.c, p.in_ch);
    assert_eq!(p.kh, 1);
    let (n, h, l) = (x.n, x.h, x.l);
    let k = p.kw;
    let lo = l * k;
    let mut out = vec![0.0; n * p.out_ch * h * lo];
    for nb in 0..n {
        for oc in 0..p.out_ch {
            for i in 0..h {
                for j in 0..lo {
                    out[((nb * p.out_ch + oc) * h + i) * lo + j] = p.bias[oc];
                }
                for li in 0..l {
                    for ic in 0..p.in_ch {
                        let v = x.at(nb, ic, i, li);
                        for kj in 0..k {
                            out[((nb * p.out_ch + oc) * h + i) * lo + li * k + kj] +=
                                w_at(p, oc, ic, 0, kj) * v;
                        }
                    }
                }
            }
        }
    }
    out
}

/// Non-overlapping 1 x k max pooling; ties keep the leftmost element.
pub fn naive_maxpool(x: &TensorBatch, k: usize) -> Vec<f64> {
    assert_eq!(x.l % k, 0);
    let lo = x.l / k;
    let mut out = vec![0.0; x.n * x.c * x.h * lo];
    for nb in 0..x.n {
        for c in 0..x.c {
            for i in 0..x.h {
                for w in 0..lo {
                    let mut best = f64::NEG_INFINITY;
                    for j in 0..k {
                        let v = x.at(nb, c, i, w * k + j);
                        if v > best {
                            best = v;
                        }
                    }
                    out[((nb * x.c + c) * x.h + i) * lo + w] = best;
                }
            }
        }
    }
    out
}

/// Worst absolute deviation between the convolution kernel and its naive
/// reference over random shapes, weights, and inputs (samples <= 4x4x16).
pub fn conv_oracle_sweep(seed: u64, cases: usize) -> f64 {
    let mut r = rng(seed);
    let mut worst: f64 = 0.0;
    for _ in 0..cases {
        let n = r.gen_range(1..=2);
        let c = r.gen_range(1..=4);
        let oc = r.gen_range(1..=4);
        let h = r.gen_range(1..=4);
        let l = r.gen_range(1..=16);
        let kh = if r.gen_bool(0.5) { 1 } else { 3 };
        let kw = if r.gen_bool(0.5) { 1 } else { 3 };
        let x = rand_batch(&mut r, n, c, h, l);
        let p = rand_conv(&mut r, oc, c, kh, kw);
        let out = conv2d_batch(&x, &p).expect("conv");
        assert_eq!(out.shape(), (n, oc, h, l));
        for (g, w) in out.data.iter().zip(naive_conv2d(&x, &p).iter()) {
            worst = worst.max((g - w).abs());
        }
    }
    worst
}

pub fn transposed_oracle_sweep(seed: u64, cases: usize) -> f64 {
    let mut r = rng(seed);
    let mut worst: f64 = 0.0;
    for _ in 0..cases {
        let n = r.gen_range(1..=2);
        let c = r.gen_range(1..=4);
        let oc = r.gen_range(1..=4);
        let h = r.gen_range(1..=3);
        let l = r.gen_range(1..=8);
        let k = if r.gen_bool(0.5) { 2 } else { 4 };
        let x = rand_batch(&mut r, n, c, h, l);
        let p = rand_conv(&mut r, oc, c, 1, k);
        let out = transposed_conv_batch(&x, &p).expect("transposed conv");
        assert_eq!(out.shape(), (n, oc, h, l * k));
        for (g, w) in out.data.iter().zip(naive_transposed_conv(&x, &p).iter()) {
            worst = worst.max((g - w).abs());
        }
    }
    worst
}

pub fn maxpool_oracle_sweep(seed: u64, cases: usize) -> f64 {
    let mut r = rng(seed);
    let mut worst: f64 = 0.0;
    for _ in 0..cases {
        let n = r.gen_range(1..=2);
        let c = r.gen_range(1..=4);
        let h = r.gen_range(1..=3);
        let k = if r.gen_bool(0.5) { 2 } else { 4 };
        let l = k * r.gen_range(1..=4);
        let mut x = rand_batch(&mut r, n, c, h, l);
        // quantized values force ties; both sides must keep the same maximum
        for v in &mut x.data {
            *v = (*v * 2.0).round() / 2.0;
        }
        let out = maxpool_batch(&x, k).expect("pool");
        assert_eq!(out.output.shape(), (n, c, h, l / k));
        for (g, w) in out.output.data.iter().zip(naive_maxpool(&x, k).iter()) {
            worst = worst.max((g - w).abs());
        }
    }
    worst
}

pub fn assert_close(got: &[f64], want: &[f64], tol: f64, what: &str) {
    assert_eq!(got.len(), want.len(), "{what}: length mismatch");
    for (i, (g, w)) in got.iter().zip(want.iter()).enumerate() {
        assert!(
            (g - w).abs() <= tol,
            "{what}: index {i} differs, got {g}, want {w}"
        );
    }
}

/// Maximal constant runs as (phase, start, end-exclusive) triples.
pub fn naive_segments(seq: &[u8]) -> Vec<(u8, usize, usize)> {
    let mut out = Vec::new();
    let mut i = 0;
    while i < seq.len() {
        let mut j = i;
        while j < seq.len() && seq[j] == seq[i] {
            j += 1;
        }
        out.push((seq[i], i, j));
        i = j;
    }
    out
}

fn count_overlap(a: (usize, usize), b: (usize, usize)) -> usize {
    (a.0..a.1).filter(|i| *i >= b.0 && *i < b.1).count()
}

/// Duration errors in ms for the interior true segments of one phase:
/// match the predicted same-phase segment with the largest index overlap
/// (first such segment on ties), or count the whole true duration when
/// nothing overlaps.
pub fn naive_duration_errors(pred: &[u8], truth: &[u8], phase: u8, rate_hz: f64) -> Vec<f64> {
    let ts = naive_segments(truth);
    let mut errors = Vec::new();
    if ts.len() < 3 {
        return errors;
    }
    let ps = naive_segments(pred);
    for &(tp, tstart, tend) in &ts[1..ts.len() - 1] {
        if tp != phase {
            continue;
        }
        let mut best_ov = 0usize;
        let mut best_len: Option<usize> = None;
        for &(pp, pstart, pend) in &ps {
            if pp != phase {
                continue;
            }
            let ov = count_overlap((tstart, tend), (pstart, pend));
            if ov > best_ov {
                best_ov = ov;
                best_len = Some(pend - pstart);
            }
        }
        let tlen = (tend - tstart) as f64;
        let err = match best_len {
            Some(plen) => (tlen - plen as f64).abs(),
            None => tlen,
        };
        errors.push(err * 1000.0 / rate_hz);
    }
    errors
}

pub fn naive_stance_onsets(seq: &[u8]) -> Vec<usize> {
    (1..seq.len()).filter(|&i| seq[i] == 0 && seq[i - 1] == 1).collect()
}

/// (detected, total) strides: consecutive true stance onsets bound one
/// stride each, detected when exactly one predicted onset lies within the
/// tolerance of the opening onset.
pub fn naive_stride_counts(pred: &[u8], truth: &[u8], rate_hz: f64, tol_ms: f64) -> (usize, usize) {
    let t = naive_stance_onsets(truth);
    if t.len() < 2 {
        return (0, 0);
    }
    let p = naive_stance_onsets(pred);
    let tol = (tol_ms * rate_hz / 1000.0).round() as i64;
    let total = t.len() - 1;
    let mut detected = 0;
    for &opening in &t[..total] {
        let mut hits = 0;
        for &q in &p {
            if (q as i64 - opening as i64).abs() <= tol {
                hits += 1;
            }
        }
        if hits == 1 {
            detected += 1;
        }
    }
    (detected, total)
}

fn naive_mean_std(errors: &[f64]) -> (f64, f64) {
    if errors.is_empty() {
        return (0.0, 0.0);
    }
    let n = errors.len() as f64;
    let mut sum = 0.0;
    for e in errors {
        sum += e;
    }
    let mean = sum / n;
    let mut var = 0.0;
    for e in errors {
        var += (e - mean) * (e - mean);
    }
    (mean, (var / n).sqrt())
}

pub struct NaiveReport {
    pub acc_pct: f64,
    pub stride_pct: f64,
    pub strides: usize,
    /// (mean_ms, std_ms, count)
    pub swing: (f64, f64, usize),
    pub stance: (f64, f64, usize),
}

/// All four gait metrics recomputed from scratch over pooled pairs.
pub fn naive_evaluate(pairs: &[(Vec<u8>, Vec<u8>)], rate_hz: f64, tol_ms: f64) -> NaiveReport {
    let mut correct = 0usize;
    let mut total = 0usize;
    let mut detected = 0usize;
    let mut strides = 0usize;
    let mut swing = Vec::new();
    let mut stance = Vec::new();
    for (pred, truth) in pairs {
        assert_eq!(pred.len(), truth.len());
        for i in 0..pred.len() {
            if pred[i] == truth[i] {
                correct += 1;
            }
        }
        total += pred.len();
        let (d, t) = naive_stride_counts(pred, truth, rate_hz, tol_ms);
        detected += d;
        strides += t;
        swing.extend(naive_duration_errors(pred, truth, 1, rate_hz));
        stance.extend(naive_duration_errors(pred, truth, 0, rate_hz));
    }
    let (sw_mean, sw_std) = naive_mean_std(&swing);
    let (st_mean, st_std) = naive_mean_std(&stance);
    NaiveReport {
        acc_pct: 100.0 * correct as f64 / total as f64,
        stride_pct: if strides == 0 {
            100.0
        } else {
            100.0 * detected as f64 / strides as f64
        },
        strides,
        swing: (sw_mean, sw_std, swing.len()),
        stance: (st_mean, st_std, stance.len()),
    }
}

/// Recording whose sample values encode their own index, so downsampled
/// picks are traceable back to the source.
pub fn indexed_recording(n: usize, rate: f64) -> (imunet_core::datapipe::ImuRecording, Vec<u8>) {
    let rec = imunet_core::datapipe::ImuRecording {
        rate_hz: rate,
        samples: (0..n).map(|i| [i as f64; 6]).collect(),
        subject_id: "S1".into(),
        activity: imunet_core::datapipe::Activity::Walking,
        speed_kmh: 5.0,
        strike: imunet_core::datapipe::Strike::FFS,
    };
    let labels = (0..n).map(|i| (i % 2) as u8).collect();
    (rec, labels)
}

/// Alternating-phase sequence with random run lengths.
pub fn random_phase_sequence(r: &mut ChaCha12Rng, len: usize) -> Vec<u8> {
    let mut out = Vec::with_capacity(len);
    let mut phase = r.gen_range(0..2) as u8;
    while out.len() < len {
        let run = r.gen_range(1..=40).min(len - out.len());
        out.extend(std::iter::repeat(phase).take(run));
        phase = 1 - phase;
    }
    out
}

/// Truth-derived prediction: random bit flips plus occasional short
/// spurious runs, as an imperfect segmenter would produce.
pub fn jittered_prediction(r: &mut ChaCha12Rng, truth: &[u8]) -> Vec<u8> {
    let mut pred = truth.to_vec();
    let flips = r.gen_range(0..=truth.len() / 8 + 1);
    for _ in 0..flips {
        let i = r.gen_range(0..pred.len());
        pred[i] = 1 - pred[i];
    }
    if r.gen_bool(0.3) {
        let start = r.gen_range(0..pred.len());
        let run = r.gen_range(1..=4).min(pred.len() - start);
        let v = r.gen_range(0..2) as u8;
        for p in &mut pred[start..start + run] {
            *p = v;
        }
    }
    pred
}

/// One (prediction, truth) pair mixing realistic and degenerate sequences.
pub fn random_label_pair(r: &mut ChaCha12Rng) -> (Vec<u8>, Vec<u8>) {
    let len = r.gen_range(1..=200);
    let truth = match r.gen_range(0..6) {
        0 => vec![0u8; len],
        1 => vec![1u8; len],
        _ => random_phase_sequence(r, len),
    };
    let pred = match r.gen_range(0..5) {
        0 => truth.clone(),
        1 => random_phase_sequence(r, len),
        2 => vec![r.gen_range(0..2) as u8; len],
        _ => jittered_prediction(r, &truth),
    };
    (pred, truth)
}

/// Library metrics vs the naive recomputation: counts exact, floats to 1e-9.
pub fn metrics_match(got: &GaitMetrics, want: &NaiveReport) -> bool {
    let close = |a: f64, b: f64| (a - b).abs() <= 1e-9;
    close(got.phase_accuracy_pct, want.acc_pct)
        && close(got.stride_accuracy_pct, want.stride_pct)
        && got.n_strides == want.strides
        && got.swing_error.n == want.swing.2
        && got.stance_error.n == want.stance.2
        && close(got.swing_error.mean_ms, want.swing.0)
        && close(got.swing_error.std_ms, want.swing.1)
        && close(got.stance_error.mean_ms, want.stance.0)
        && close(got.stance_error.std_ms, want.stance.1)
}

/// Central finite-difference sweeps for every backward pass. Each function
/// returns how many random shapes it exercised and the worst relative error
/// between analytic and numeric gradients.
pub mod fd {
    use super::{rand_batch, rand_conv, rng};
    use imunet_core::kernel::gradcheck::{max_rel_err, numeric_grad};
    use imunet_core::kernel::{
        batchnorm_backward, batchnorm_train, conv2d_backward_batch, conv2d_batch, crop_length,
        crop_length_backward, maxpool_backward_batch, maxpool_batch, mean_height,
        mean_height_backward, pad_right_edge, pad_right_edge_backward, relu_backward_batch,
        relu_batch, softmax_cross_entropy, transposed_conv_backward_batch, transposed_conv_batch,
        BatchNormParams, ConvParams, TensorBatch,
    };
    use imunet_core::model::{InputLayout, Network, NetworkSpec, Variant};
    use rand::Rng;
    use rand_chacha::ChaCha12Rng;

    pub const PROBE: f64 = 1e-5;

    pub struct Sweep {
        pub shapes: usize,
        pub worst: f64,
    }

    /// Fixed random projection turning a tensor-valued function into a
    /// scalar; its gradient w.r.t. the output is the coefficient tensor.
    fn coeffs(r: &mut ChaCha12Rng, len: usize) -> Vec<f64> {
        (0..len).map(|_| r.gen_range(-1.0..1.0)).collect()
    }

    fn dot(a: &[f64], b: &[f64]) -> f64 {
        a.iter().zip(b.iter()).map(|(x, y)| x * y).sum()
    }

    fn grad_tensor(shape: (usize, usize, usize, usize), coeff: &[f64]) -> TensorBatch {
        let mut g = TensorBatch::zeros(shape.0, shape.1, shape.2, shape.3);
        g.data.copy_from_slice(coeff);
        g
    }

    pub fn conv(seed: u64, cases: usize) -> Sweep {
        let mut r = rng(seed);
        let mut worst: f64 = 0.0;
        for _ in 0..cases {
            let n = r.gen_range(1..=2);
            let c = r.gen_range(1..=3);
            let oc = r.gen_range(1..=3);
            let h = r.gen_range(1..=3);
            let l = r.gen_range(2..=8);
            let kh = if r.gen_bool(0.5) { 1 } else { 3 };
            let x = rand_batch(&mut r, n, c, h, l);
            let p = rand_conv(&mut r, oc, c, kh, 3);
            let y = conv2d_batch(&x, &p).expect("conv");
            let co = coeffs(&mut r, y.data.len());
            let grads =
                conv2d_backward_batch(&x, &p, &grad_tensor(y.shape(), &co)).expect("backward");

            let mut xv = x.data.clone();
            let fd_x = numeric_grad(
                |v| {
                    let mut xt = x.clone();
                    xt.data.copy_from_slice(v);
                    dot(&conv2d_batch(&xt, &p).expect("conv").data, &co)
                },
                &mut xv,
                PROBE,
            );
            worst = worst.max(max_rel_err(&grads.input.data, &fd_x));

            let mut wv = p.weights.clone();
            let fd_w = numeric_grad(
                |v| {
                    let pt = ConvParams::from_parts(oc, c, kh, 3, v.to_vec(), p.bias.clone())
                        .expect("params");
                    dot(&conv2d_batch(&x, &pt).expect("conv").data, &co)
                },
                &mut wv,
                PROBE,
            );
            worst = worst.max(max_rel_err(&grads.weights, &fd_w));

            let mut bv = p.bias.clone();
            let fd_b = numeric_grad(
                |v| {
                    let pt = ConvParams::from_parts(oc, c, kh, 3, p.weights.clone(), v.to_vec())
                        .expect("params");
                    dot(&conv2d_batch(&x, &pt).expect("conv").data, &co)
                },
                &mut bv,
                PROBE,
            );
            worst = worst.max(max_rel_err(&grads.bias, &fd_b));
        }
        Sweep {
            shapes: cases,
            worst,
        }
    }

    pub fn transposed(seed: u64, cases: usize) -> Sweep {
        let mut r = rng(seed);
        let mut worst: f64 = 0.0;
        for _ in 0..cases {
            let n = r.gen_range(1..=2);
            let c = r.gen_range(1..=3);
            let oc = r.gen_range(1..=3);
            let h = r.gen_range(1..=2);
            let l = r.gen_range(1..=6);
            let k = if r.gen_bool(0.5) { 2 } else { 4 };
            let x = rand_batch(&mut r, n, c, h, l);
            let p = rand_conv(&mut r, oc, c, 1, k);
            let y = transposed_conv_batch(&x, &p).expect("up");
            let co = coeffs(&mut r, y.data.len());
            let grads = transposed_conv_backward_batch(&x, &p, &grad_tensor(y.shape(), &co))
                .expect("backward");

            let mut xv = x.data.clone();
            let fd_x = numeric_grad(
                |v| {
                    let mut xt = x.clone();
                    xt.data.copy_from_slice(v);
                    dot(&transposed_conv_batch(&xt, &p).expect("up").data, &co)
                },
                &mut xv,
                PROBE,
            );
            worst = worst.max(max_rel_err(&grads.input.data, &fd_x));

            let mut wv = p.weights.clone();
            let fd_w = numeric_grad(
                |v| {
                    let pt = ConvParams::from_parts(oc, c, 1, k, v.to_vec(), p.bias.clone())
                        .expect("params");
                    dot(&transposed_conv_batch(&x, &pt).expect("up").data, &co)
                },
                &mut wv,
                PROBE,
            );
            worst = worst.max(max_rel_err(&grads.weights, &fd_w));

            let mut bv = p.bias.clone();
            let fd_b = numeric_grad(
                |v| {
                    let pt = ConvParams::from_parts(oc, c, 1, k, p.weights.clone(), v.to_vec())
                        .expect("params");
                    dot(&transposed_conv_batch(&x, &pt).expect("up").data, &co)
                },
                &mut bv,
                PROBE,
            );
            worst = worst.max(max_rel_err(&grads.bias, &fd_b));
        }
        Sweep {
            shapes: cases,
            worst,
        }
    }

    pub fn maxpool(seed: u64, cases: usize) -> Sweep {
        let mut r = rng(seed);
        let mut worst: f64 = 0.0;
        for _ in 0..cases {
            let n = r.gen_range(1..=2);
            let c = r.gen_range(1..=3);
            let h = r.gen_range(1..=2);
            let k = if r.gen_bool(0.5) { 2 } else { 4 };
            let l = k * r.gen_range(1..=4);
            // distinct multiples of 0.05 keep every max selection stable
            // under the probe step
            let mut x = TensorBatch::zeros(n, c, h, l);
            let len = x.data.len();
            let mut vals: Vec<f64> = (0..len).map(|i| i as f64 * 0.05).collect();
            for i in (1..len).rev() {
                vals.swap(i, r.gen_range(0..=i));
            }
            x.data.copy_from_slice(&vals);

            let pooled = maxpool_batch(&x, k).expect("pool");
            let co = coeffs(&mut r, pooled.output.data.len());
            let gx = maxpool_backward_batch(
                x.shape(),
                &pooled.argmax,
                &grad_tensor(pooled.output.shape(), &co),
            )
            .expect("backward");

            let mut xv = x.data.clone();
            let fd_x = numeric_grad(
                |v| {
                    let mut xt = x.clone();
                    xt.data.copy_from_slice(v);
                    dot(&maxpool_batch(&xt, k).expect("pool").output.data, &co)
                },
                &mut xv,
                PROBE,
            );
            worst = worst.max(max_rel_err(&gx.data, &fd_x));
        }
        Sweep {
            shapes: cases,
            worst,
        }
    }

    pub fn batchnorm(seed: u64, cases: usize) -> Sweep {
        let mut r = rng(seed);
        let mut worst: f64 = 0.0;
        for _ in 0..cases {
            let n = r.gen_range(1..=2);
            let c = r.gen_range(1..=3);
            let h = r.gen_range(1..=2);
            let l = r.gen_range(2..=6);
            let x = rand_batch(&mut r, n, c, h, l);
            let mut p = BatchNormParams::new(c);
            for ch in 0..c {
                p.gamma[ch] = r.gen_range(0.5..1.5);
                p.beta[ch] = r.gen_range(-0.5..0.5);
            }
            let (y, cache) = batchnorm_train(&x, &mut p.clone()).expect("bn");
            let co = coeffs(&mut r, y.data.len());
            let grads =
                batchnorm_backward(&grad_tensor(y.shape(), &co), &p, &cache).expect("backward");

            let mut xv = x.data.clone();
            let fd_x = numeric_grad(
                |v| {
                    let mut xt = x.clone();
                    xt.data.copy_from_slice(v);
                    dot(&batchnorm_train(&xt, &mut p.clone()).expect("bn").0.data, &co)
                },
                &mut xv,
                PROBE,
            );
            worst = worst.max(max_rel_err(&grads.input.data, &fd_x));

            let mut gv = p.gamma.clone();
            let fd_g = numeric_grad(
                |v| {
                    let mut pt = p.clone();
                    pt.gamma.copy_from_slice(v);
                    dot(&batchnorm_train(&x, &mut pt).expect("bn").0.data, &co)
                },
                &mut gv,
                PROBE,
            );
            worst = worst.max(max_rel_err(&grads.gamma, &fd_g));

            let mut bv = p.beta.clone();
            let fd_b = numeric_grad(
                |v| {
                    let mut pt = p.clone();
                    pt.beta.copy_from_slice(v);
                    dot(&batchnorm_train(&x, &mut pt).expect("bn").0.data, &co)
                },
                &mut bv,
                PROBE,
            );
            worst = worst.max(max_rel_err(&grads.beta, &fd_b));
        }
        Sweep {
            shapes: cases,
            worst,
        }
    }

    pub fn relu(seed: u64, cases: usize) -> Sweep {
        let mut r = rng(seed);
        let mut worst: f64 = 0.0;
        for _ in 0..cases {
            let n = r.gen_range(1..=2);
            let c = r.gen_range(1..=3);
            let l = r.gen_range(2..=8);
            // keep activations away from the kink at zero
            let mut x = TensorBatch::zeros(n, c, 1, l);
            for v in &mut x.data {
                let mag = r.gen_range(0.1..1.0);
                *v = if r.gen_bool(0.5) { mag } else { -mag };
            }
            let (y, mask) = relu_batch(&x);
            let co = coeffs(&mut r, y.data.len());
            let gx = relu_backward_batch(&grad_tensor(y.shape(), &co), &mask).expect("backward");

            let mut xv = x.data.clone();
            let fd_x = numeric_grad(
                |v| {
                    let mut xt = x.clone();
                    xt.data.copy_from_slice(v);
                    dot(&relu_batch(&xt).0.data, &co)
                },
                &mut xv,
                PROBE,
            );
            worst = worst.max(max_rel_err(&gx.data, &fd_x));
        }
        Sweep {
            shapes: cases,
            worst,
        }
    }

    /// Edge padding, cropping, and the height-mean reduction, one random
    /// shape per case (three layer checks each).
    pub fn reshape_ops(seed: u64, cases: usize) -> Sweep {
        let mut r = rng(seed);
        let mut worst: f64 = 0.0;
        for _ in 0..cases {
            let n = r.gen_range(1..=2);
            let c = r.gen_range(1..=3);
            let h = r.gen_range(2..=4);
            let l = r.gen_range(2..=6);
            let x = rand_batch(&mut r, n, c, h, l);

            let target = l + r.gen_range(1..=4);
            let y = pad_right_edge(&x, target).expect("pad");
            let co = coeffs(&mut r, y.data.len());
            let gx = pad_right_edge_backward(&grad_tensor(y.shape(), &co), l).expect("backward");
            let mut xv = x.data.clone();
            let fd = numeric_grad(
                |v| {
                    let mut xt = x.clone();
                    xt.data.copy_from_slice(v);
                    dot(&pad_right_edge(&xt, target).expect("pad").data, &co)
                },
                &mut xv,
                PROBE,
            );
            worst = worst.max(max_rel_err(&gx.data, &fd));

            let keep = r.gen_range(1..=l);
            let y = crop_length(&x, keep).expect("crop");
            let co = coeffs(&mut r, y.data.len());
            let gx = crop_length_backward(&grad_tensor(y.shape(), &co), l).expect("backward");
            let mut xv = x.data.clone();
            let fd = numeric_grad(
                |v| {
                    let mut xt = x.clone();
                    xt.data.copy_from_slice(v);
                    dot(&crop_length(&xt, keep).expect("crop").data, &co)
                },
                &mut xv,
                PROBE,
            );
            worst = worst.max(max_rel_err(&gx.data, &fd));

            let y = mean_height(&x);
            let co = coeffs(&mut r, y.data.len());
            let gx = mean_height_backward(&grad_tensor(y.shape(), &co), h).expect("backward");
            let mut xv = x.data.clone();
            let fd = numeric_grad(
                |v| {
                    let mut xt = x.clone();
                    xt.data.copy_from_slice(v);
                    dot(&mean_height(&xt).data, &co)
                },
                &mut xv,
                PROBE,
            );
            worst = worst.max(max_rel_err(&gx.data, &fd));
        }
        Sweep {
            shapes: cases,
            worst,
        }
    }

    pub fn loss(seed: u64, cases: usize) -> Sweep {
        let mut r = rng(seed);
        let mut worst: f64 = 0.0;
        for _ in 0..cases {
            let n = r.gen_range(1..=2);
            let c = r.gen_range(2..=4);
            let l = r.gen_range(1..=8);
            let logits = rand_batch(&mut r, n, c, 1, l);
            let labels: Vec<u8> = (0..n * l).map(|_| r.gen_range(0..c) as u8).collect();
            let (_, grad) = softmax_cross_entropy(&logits, &labels).expect("loss");

            let mut zv = logits.data.clone();
            let fdg = numeric_grad(
                |v| {
                    let mut zt = logits.clone();
                    zt.data.copy_from_slice(v);
                    softmax_cross_entropy(&zt, &labels).expect("loss").0
                },
                &mut zv,
                PROBE,
            );
            worst = worst.max(max_rel_err(&grad.data, &fdg));
        }
        Sweep {
            shapes: cases,
            worst,
        }
    }

    /// Sampled parameter coordinates of the fully assembled network,
    /// differentiated through every layer by the training-mode forward.
    pub fn network(seed: u64) -> Sweep {
        let spec = NetworkSpec {
            variant: Variant::IMUNet,
            layout: InputLayout::SpatialFirst,
            pool_k: 2,
            encoder_channels: vec![2, 2, 3, 3, 4],
            window_len: 16,
            num_classes: 2,
        };
        let base = Network::build(spec, seed).expect("build");
        let mut r = rng(seed ^ 0x5EED);
        let x = rand_batch(&mut r, 2, 1, 6, 16);
        let labels: Vec<u8> = (0..2 * 16).map(|_| r.gen_range(0..2) as u8).collect();

        let mut net = base.clone();
        net.zero_grads();
        let (logits, trace) = net.forward_train(&x).expect("forward");
        let (_, grad) = softmax_cross_entropy(&logits, &labels).expect("loss");
        net.backward(trace, &grad).expect("backward");
        let analytic = net.grad_entries();

        let entries = base.state_entries();
        let loss_with = |pairs: &[(String, Vec<f64>)]| {
            // fresh clone per evaluation: training-mode forward folds batch
            // statistics into the running estimates
            let mut n = base.clone();
            n.load_state_entries(pairs).expect("load");
            let (lg, _) = n.forward_train(&x).expect("forward");
            softmax_cross_entropy(&lg, &labels).expect("loss").0
        };

        let mut worst: f64 = 0.0;
        // probe a couple of coordinates in every learnable buffer
        for (ei, (name, _, values)) in entries.iter().enumerate() {
            if name.ends_with(".running_mean") || name.ends_with(".running_var") {
                continue;
            }
            let gvals = &analytic
                .iter()
                .find(|(n, _)| n == name)
                .expect("gradient entry")
                .1;
            for _ in 0..2 {
                let ci = r.gen_range(0..values.len());
                let mut pairs: Vec<(String, Vec<f64>)> = entries
                    .iter()
                    .map(|(n, _, v)| (n.clone(), v.clone()))
                    .collect();
                pairs[ei].1[ci] += PROBE;
                let up = loss_with(&pairs);
                pairs[ei].1[ci] -= 2.0 * PROBE;
                let down = loss_with(&pairs);
                let numeric = (up - down) / (2.0 * PROBE);
                let a = gvals[ci];
                let scale = a.abs().max(numeric.abs()).max(1e-6);
                worst = worst.max((a - numeric).abs() / scale);
            }
        }
        Sweep { shapes: 1, worst }
    }
}

/// Synthesize a corpus and cut it into normalized windows at `target_hz`,
/// mirroring the preprocessing pipeline: per-recording downsampling seeded
/// by recording index, windowing, normalization, then a pooled set.
pub fn corpus_window_set(
    subjects: usize,
    condition_duration_s: f64,
    corpus_seed: u64,
    target_hz: f64,
    window_len: usize,
    mode: WindowMode,
    pipeline_seed: u64,
) -> WindowSet {
    let corpus = synth_dataset(subjects, condition_duration_s, corpus_seed).expect("corpus");
    let mut sets = Vec::new();
    for (i, (rec, events)) in corpus.iter().enumerate() {
        let labels = synchronize_labels(events, rec.rate_hz, rec.samples.len()).expect("labels");
        let pairs = if target_hz == rec.rate_hz {
            vec![(rec.clone(), labels)]
        } else {
            downsample_random(
                rec,
                &labels,
                target_hz,
                1,
                pipeline_seed.wrapping_add(i as u64),
            )
            .expect("downsample")
        };
        for (low, lab) in &pairs {
            let mut ws = segment_windows(low, lab, window_len, mode).expect("windows");
            for w in &mut ws.windows {
                normalize(&mut w.signal, window_len).expect("normalize");
            }
            if !ws.windows.is_empty() {
                sets.push(ws);
            }
        }
    }
    merge_window_sets(sets).expect("merge")
}
