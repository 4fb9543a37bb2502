//! Gait quality metrics over per-sample phase labels: sample accuracy,
//! per-phase duration error, and stride detection rate.
//!
//! Duration errors match each interior true segment to the same-phase
//! predicted segment with maximum sample overlap; the first and last
//! segments of a sequence are boundary-truncated and excluded. Stride
//! detection asks for exactly one predicted stance onset within tolerance
//! of the true onset that opens each stride.

use crate::error::{Error, Result};

pub const STANCE: u8 = 0;
pub const SWING: u8 = 1;
pub const DEFAULT_STRIDE_TOL_MS: f64 = 50.0;

/// Maximal constant-label run.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct GaitSegment {
    pub phase: u8,
    pub start: usize,
    pub len: usize,
}

/// Mean and population standard deviation over matched duration errors.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ErrorStats {
    pub mean_ms: f64,
    pub std_ms: f64,
    pub n: usize,
}

impl ErrorStats {
    pub fn from_errors(errors: &[f64]) -> ErrorStats {
        if errors.is_empty() {
            return ErrorStats {
                mean_ms: 0.0,
                std_ms: 0.0,
                n: 0,
            };
        }
        let n = errors.len() as f64;
        let mean = errors.iter().sum::<f64>() / n;
        let var = errors.iter().map(|e| (e - mean) * (e - mean)).sum::<f64>() / n;
        ErrorStats {
            mean_ms: mean,
            std_ms: var.sqrt(),
            n: errors.len(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GaitMetrics {
    pub swing_error: ErrorStats,
    pub stance_error: ErrorStats,
    pub phase_accuracy_pct: f64,
    pub stride_accuracy_pct: f64,
    pub n_strides: usize,
}

/// Percentage of samples whose predicted phase matches the truth.
pub fn per_sample_accuracy(pred: &[u8], truth: &[u8]) -> Result<f64> {
    if pred.len() != truth.len() {
        return Err(Error::Shape(format!(
            "prediction length {} does not match truth length {}",
            pred.len(),
            truth.len()
        )));
    }
    if pred.is_empty() {
        return Err(Error::Empty("accuracy over zero samples"));
    }
    let correct = pred.iter().zip(truth.iter()).filter(|(a, b)| a == b).count();
    Ok(100.0 * correct as f64 / pred.len() as f64)
}

/// Split labels into maximal constant runs; the runs tile the sequence.
pub fn extract_segments(labels: &[u8]) -> Vec<GaitSegment> {
    let mut segments = Vec::new();
    if labels.is_empty() {
        return segments;
    }
    let mut start = 0usize;
    for i in 1..labels.len() {
        if labels[i] != labels[start] {
            segments.push(GaitSegment {
                phase: labels[start],
                start,
                len: i - start,
            });
            start = i;
        }
    }
    segments.push(GaitSegment {
        phase: labels[start],
        start,
        len: labels.len() - start,
    });
    segments
}

fn overlap(a: &GaitSegment, b: &GaitSegment) -> usize {
    let lo = a.start.max(b.start);
    let hi = (a.start + a.len).min(b.start + b.len);
    hi.saturating_sub(lo)
}

/// Duration errors for the interior true segments of one phase, in ms.
/// Each true segment takes the maximally overlapping same-phase predicted
/// segment (earliest wins ties); with no overlapping candidate the full
/// true duration counts as the error.
fn duration_errors_for_phase(
    pred_segments: &[GaitSegment],
    true_segments: &[GaitSegment],
    phase: u8,
    rate_hz: f64,
) -> Vec<f64> {
    let ms_per_sample = 1000.0 / rate_hz;
    let mut errors = Vec::new();
    if true_segments.len() < 3 {
        return errors;
    }
    for ts in &true_segments[1..true_segments.len() - 1] {
        if ts.phase != phase {
            continue;
        }
        let mut best: Option<(usize, usize)> = None; // (overlap, pred len)
        for ps in pred_segments {
            if ps.phase != phase {
                continue;
            }
            let ov = overlap(ts, ps);
            if ov == 0 {
                continue;
            }
            match best {
                Some((b, _)) if b >= ov => {}
                _ => best = Some((ov, ps.len)),
            }
        }
        let err = match best {
            Some((_, plen)) => (ts.len as f64 - plen as f64).abs() * ms_per_sample,
            None => ts.len as f64 * ms_per_sample,
        };
        errors.push(err);
    }
    errors
}

/// Swing and stance duration error statistics between two segmentations of
/// the same sequence.
pub fn phase_time_error(
    pred_segments: &[GaitSegment],
    true_segments: &[GaitSegment],
    rate_hz: f64,
) -> (ErrorStats, ErrorStats) {
    let swing = duration_errors_for_phase(pred_segments, true_segments, SWING, rate_hz);
    let stance = duration_errors_for_phase(pred_segments, true_segments, STANCE, rate_hz);
    (
        ErrorStats::from_errors(&swing),
        ErrorStats::from_errors(&stance),
    )
}

/// Sample indices where the label transitions into stance. The first sample
/// is never an onset: a transition needs a preceding swing sample.
pub fn stance_onsets(labels: &[u8]) -> Vec<usize> {
    let mut onsets = Vec::new();
    for i in 1..labels.len() {
        if labels[i] == STANCE && labels[i - 1] == SWING {
            onsets.push(i);
        }
    }
    onsets
}

/// Detected strides and total strides. A stride spans consecutive true
/// stance onsets and counts as detected when exactly one predicted onset
/// falls within the tolerance of its opening onset.
pub fn stride_detection_counts(
    pred: &[u8],
    truth: &[u8],
    rate_hz: f64,
    tol_ms: f64,
) -> Result<(usize, usize)> {
    if pred.len() != truth.len() {
        return Err(Error::Shape(format!(
            "prediction length {} does not match truth length {}",
            pred.len(),
            truth.len()
        )));
    }
    let tol_samples = (tol_ms * rate_hz / 1000.0).round() as i64;
    let true_onsets = stance_onsets(truth);
    let pred_onsets = stance_onsets(pred);
    if true_onsets.len() < 2 {
        return Ok((0, 0));
    }
    let total = true_onsets.len() - 1;
    let mut detected = 0usize;
    for &opening in &true_onsets[..total] {
        let hits = pred_onsets
            .iter()
            .filter(|&&p| (p as i64 - opening as i64).abs() <= tol_samples)
            .count();
        if hits == 1 {
            detected += 1;
        }
    }
    Ok((detected, total))
}

/// Stride detection as a percentage; vacuously 100 when the truth contains
/// no complete stride.
pub fn stride_detection_accuracy(
    pred: &[u8],
    truth: &[u8],
    rate_hz: f64,
    tol_ms: f64,
) -> Result<f64> {
    let (detected, total) = stride_detection_counts(pred, truth, rate_hz, tol_ms)?;
    if total == 0 {
        return Ok(100.0);
    }
    Ok(100.0 * detected as f64 / total as f64)
}

/// Pool the four metrics over several (prediction, truth) sequence pairs,
/// e.g. one pair per recording. Accuracy and stride counts accumulate over
/// samples/strides; duration errors pool into one mean +- std per phase.
pub fn evaluate_predictions(
    pairs: &[(Vec<u8>, Vec<u8>)],
    rate_hz: f64,
    tol_ms: f64,
) -> Result<GaitMetrics> {
    if pairs.is_empty() {
        return Err(Error::Empty("no prediction/truth pairs"));
    }
    let mut correct = 0usize;
    let mut total = 0usize;
    let mut detected = 0usize;
    let mut strides = 0usize;
    let mut swing_errors = Vec::new();
    let mut stance_errors = Vec::new();
    for (pred, truth) in pairs {
        if pred.len() != truth.len() {
            return Err(Error::Shape(format!(
                "prediction length {} does not match truth length {}",
                pred.len(),
                truth.len()
            )));
        }
        correct += pred.iter().zip(truth.iter()).filter(|(a, b)| a == b).count();
        total += pred.len();
        let (d, t) = stride_detection_counts(pred, truth, rate_hz, tol_ms)?;
        detected += d;
        strides += t;
        let ps = extract_segments(pred);
        let ts = extract_segments(truth);
        swing_errors.extend(duration_errors_for_phase(&ps, &ts, SWING, rate_hz));
        stance_errors.extend(duration_errors_for_phase(&ps, &ts, STANCE, rate_hz));
    }
    if total == 0 {
        return Err(Error::Empty("no samples to evaluate"));
    }
    Ok(GaitMetrics {
        swing_error: ErrorStats::from_errors(&swing_errors),
        stance_error: ErrorStats::from_errors(&stance_errors),
        phase_accuracy_pct: 100.0 * correct as f64 / total as f64,
        stride_accuracy_pct: if strides == 0 {
            100.0
        } else {
            100.0 * detected as f64 / strides as f64
        },
        n_strides: strides,
    })
}
