//! Preprocessing pipeline: label synchronization, window segmentation,
//! normalization, input layout arrangement, and the random 1000 Hz -> 20 Hz
//! downsampling replicas.
//!
//! Every step is deterministic given its inputs (and seed, where one
//! exists), so the same raw recordings always produce the same windows.

pub mod files;

use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha12Rng;

use crate::error::{Error, Result};
use crate::kernel::Tensor;
use crate::model::InputLayout;

pub const ACCEL_RANGE_G: f64 = 16.0;
pub const GYRO_RANGE_DPS: f64 = 2000.0;
pub const NUM_AXES: usize = 6;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Activity {
    Walking,
    Running,
}

impl Activity {
    pub fn as_str(&self) -> &'static str {
        match self {
            Activity::Walking => "walking",
            Activity::Running => "running",
        }
    }

    pub fn parse(s: &str) -> Result<Activity> {
        match s {
            "walking" => Ok(Activity::Walking),
            "running" => Ok(Activity::Running),
            _ => Err(Error::InvalidArgument(format!("unknown activity {:?}", s))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Strike {
    FFS,
    RFS,
}

impl Strike {
    pub fn as_str(&self) -> &'static str {
        match self {
            Strike::FFS => "FFS",
            Strike::RFS => "RFS",
        }
    }

    pub fn parse(s: &str) -> Result<Strike> {
        match s {
            "FFS" => Ok(Strike::FFS),
            "RFS" => Ok(Strike::RFS),
            _ => Err(Error::InvalidArgument(format!("unknown strike {:?}", s))),
        }
    }
}

/// One recording of the six-axis stream: accel in g, gyro in deg/s, sampled
/// uniformly at `rate_hz`. Sample i sits at time i/rate_hz.
#[derive(Debug, Clone, PartialEq)]
pub struct ImuRecording {
    pub rate_hz: f64,
    pub samples: Vec<[f64; 6]>,
    pub subject_id: String,
    pub activity: Activity,
    pub speed_kmh: f64,
    pub strike: Strike,
}

impl ImuRecording {
    /// Stable identifier used for provenance and file names.
    pub fn id(&self) -> String {
        format!(
            "{}_{}_{}kmh_{}",
            self.subject_id,
            self.activity.as_str(),
            self.speed_kmh.round() as i64,
            self.strike.as_str()
        )
    }

    pub fn duration_s(&self) -> f64 {
        self.samples.len() as f64 / self.rate_hz
    }
}

/// Ordered phase onsets: (time_s, phase), strictly increasing, alternating,
/// starting at t = 0.
#[derive(Debug, Clone, PartialEq)]
pub struct PhaseEventList {
    events: Vec<(f64, u8)>,
}

impl PhaseEventList {
    pub fn new(events: Vec<(f64, u8)>) -> Result<Self> {
        if events.is_empty() {
            return Err(Error::Empty("phase event list"));
        }
        if events[0].0 != 0.0 {
            return Err(Error::InvalidArgument(format!(
                "first phase event must be at t=0, got {}",
                events[0].0
            )));
        }
        for pair in events.windows(2) {
            if pair[1].0 <= pair[0].0 {
                return Err(Error::TimeRegression {
                    t_s: pair[1].0,
                    last_s: pair[0].0,
                });
            }
            if pair[1].1 == pair[0].1 {
                return Err(Error::InvalidArgument(format!(
                    "phase events must alternate; {} repeats at t={}",
                    pair[1].1, pair[1].0
                )));
            }
        }
        for &(t, p) in &events {
            if p > 1 {
                return Err(Error::BadLabel(p as i64));
            }
            if !t.is_finite() {
                return Err(Error::Numeric(format!("non-finite event time {}", t)));
            }
        }
        Ok(PhaseEventList { events })
    }

    pub fn events(&self) -> &[(f64, u8)] {
        &self.events
    }
}

/// Phase of each sample: the latest onset at or before the sample time, so
/// a phase changes at the first sample whose timestamp reaches the onset.
pub fn synchronize_labels(
    events: &PhaseEventList,
    rate_hz: f64,
    n_samples: usize,
) -> Result<Vec<u8>> {
    if n_samples == 0 {
        return Err(Error::Empty("label synchronization over zero samples"));
    }
    if !(rate_hz > 0.0) {
        return Err(Error::InvalidArgument(format!(
            "sample rate must be positive, got {}",
            rate_hz
        )));
    }
    let evs = events.events();
    let mut labels = Vec::with_capacity(n_samples);
    let mut cursor = 0usize;
    for i in 0..n_samples {
        let t = i as f64 / rate_hz;
        while cursor + 1 < evs.len() && evs[cursor + 1].0 <= t {
            cursor += 1;
        }
        labels.push(evs[cursor].1);
    }
    Ok(labels)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum WindowMode {
    Train,
    Test,
}

/// One segmented window with its provenance.
#[derive(Debug, Clone, PartialEq)]
pub struct Window {
    /// Row-major 6 x window_len signal, channel order ax,ay,az,gx,gy,gz.
    pub signal: Vec<f64>,
    pub labels: Vec<u8>,
    pub rec_id: String,
    pub subject_id: String,
    pub start: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct WindowSet {
    pub windows: Vec<Window>,
    pub window_len: usize,
    pub stride: usize,
    pub rate_hz: f64,
}

/// Number of full windows for N samples: floor((N - w)/stride) + 1, zero
/// when the recording is shorter than one window.
pub fn window_count(n_samples: usize, window_len: usize, stride: usize) -> usize {
    if n_samples < window_len {
        0
    } else {
        (n_samples - window_len) / stride + 1
    }
}

/// Cut one recording into windows. Train mode overlaps by half a window;
/// test mode tiles without overlap. Trailing partial windows are dropped.
pub fn segment_windows(
    recording: &ImuRecording,
    labels: &[u8],
    window_len: usize,
    mode: WindowMode,
) -> Result<WindowSet> {
    if window_len == 0 {
        return Err(Error::InvalidArgument("window_len must be >= 1".into()));
    }
    if labels.len() != recording.samples.len() {
        return Err(Error::Shape(format!(
            "labels ({}) do not match samples ({})",
            labels.len(),
            recording.samples.len()
        )));
    }
    let stride = match mode {
        WindowMode::Train => (window_len / 2).max(1),
        WindowMode::Test => window_len,
    };
    let n = recording.samples.len();
    let count = window_count(n, window_len, stride);
    let rec_id = recording.id();
    let mut windows = Vec::with_capacity(count);
    for w in 0..count {
        let start = w * stride;
        let mut signal = vec![0.0; NUM_AXES * window_len];
        for (j, sample) in recording.samples[start..start + window_len].iter().enumerate() {
            for axis in 0..NUM_AXES {
                signal[axis * window_len + j] = sample[axis];
            }
        }
        windows.push(Window {
            signal,
            labels: labels[start..start + window_len].to_vec(),
            rec_id: rec_id.clone(),
            subject_id: recording.subject_id.clone(),
            start,
        });
    }
    Ok(WindowSet {
        windows,
        window_len,
        stride,
        rate_hz: recording.rate_hz,
    })
}

/// Merge window sets that share geometry (used to pool recordings).
pub fn merge_window_sets(sets: Vec<WindowSet>) -> Result<WindowSet> {
    let mut iter = sets.into_iter();
    let mut merged = iter
        .next()
        .ok_or(Error::Empty("no window sets to merge"))?;
    for s in iter {
        if s.window_len != merged.window_len
            || s.stride != merged.stride
            || s.rate_hz != merged.rate_hz
        {
            return Err(Error::Shape(format!(
                "window set geometry mismatch: ({}, {}, {}) vs ({}, {}, {})",
                s.window_len, s.stride, s.rate_hz, merged.window_len, merged.stride, merged.rate_hz
            )));
        }
        merged.windows.extend(s.windows);
    }
    Ok(merged)
}

/// Scale accel rows by 1/16 and gyro rows by 1/2000 in place. Values beyond
/// the sensor range pass through scaled; the return value counts them so
/// callers can warn instead of silently clamping.
pub fn normalize(signal: &mut [f64], window_len: usize) -> Result<usize> {
    if signal.len() != NUM_AXES * window_len {
        return Err(Error::Shape(format!(
            "signal length {} is not 6 x {}",
            signal.len(),
            window_len
        )));
    }
    let mut out_of_range = 0usize;
    for axis in 0..NUM_AXES {
        let div = if axis < 3 { ACCEL_RANGE_G } else { GYRO_RANGE_DPS };
        for v in &mut signal[axis * window_len..(axis + 1) * window_len] {
            *v /= div;
            if v.abs() > 1.0 {
                out_of_range += 1;
            }
        }
    }
    Ok(out_of_range)
}

/// Wrap a 6 x L signal into the network input tensor. SpatialFirst keeps the
/// six axes on the height axis of one channel (1 x 6 x L); TemporalFirst
/// gives each axis its own channel (6 x 1 x L). Both share the same flat
/// data order, so this is a pure reshape.
pub fn arrange_layout(signal: &[f64], window_len: usize, layout: InputLayout) -> Result<Tensor> {
    if signal.len() != NUM_AXES * window_len {
        return Err(Error::Shape(format!(
            "signal length {} is not 6 x {}",
            signal.len(),
            window_len
        )));
    }
    let data = signal.to_vec();
    match layout {
        InputLayout::SpatialFirst => Tensor::from_data(1, NUM_AXES, window_len, data),
        InputLayout::TemporalFirst => Tensor::from_data(NUM_AXES, 1, window_len, data),
    }
}

/// Recover the 6 x L signal from either layout (inverse of
/// [`arrange_layout`]).
pub fn flatten_layout(t: &Tensor) -> Result<Vec<f64>> {
    let ok = (t.c == 1 && t.h == NUM_AXES) || (t.c == NUM_AXES && t.h == 1);
    if !ok {
        return Err(Error::Shape(format!(
            "tensor {:?} is not an arranged 6-axis window",
            t.shape()
        )));
    }
    Ok(t.data.clone())
}

/// Random downsampling to `target_hz`: the source splits into consecutive
/// blocks of rate/target samples and every replica keeps one uniformly drawn
/// sample (and its label) per block. A trailing partial block is dropped.
pub fn downsample_random(
    recording: &ImuRecording,
    labels: &[u8],
    target_hz: f64,
    replicas: usize,
    seed: u64,
) -> Result<Vec<(ImuRecording, Vec<u8>)>> {
    if labels.len() != recording.samples.len() {
        return Err(Error::Shape(format!(
            "labels ({}) do not match samples ({})",
            labels.len(),
            recording.samples.len()
        )));
    }
    if !(target_hz > 0.0) || recording.rate_hz % target_hz != 0.0 {
        return Err(Error::RateIndivisible {
            rate_hz: recording.rate_hz,
            target_hz,
        });
    }
    let block = (recording.rate_hz / target_hz) as usize;
    let n_blocks = recording.samples.len() / block;
    if n_blocks == 0 {
        return Err(Error::Empty("recording shorter than one block"));
    }
    let mut rng = ChaCha12Rng::seed_from_u64(seed);
    let mut out = Vec::with_capacity(replicas);
    for _ in 0..replicas {
        let mut samples = Vec::with_capacity(n_blocks);
        let mut lab = Vec::with_capacity(n_blocks);
        for b in 0..n_blocks {
            let idx = b * block + rng.gen_range(0..block);
            samples.push(recording.samples[idx]);
            lab.push(labels[idx]);
        }
        out.push((
            ImuRecording {
                rate_hz: target_hz,
                samples,
                subject_id: recording.subject_id.clone(),
                activity: recording.activity,
                speed_kmh: recording.speed_kmh,
                strike: recording.strike,
            },
            lab,
        ));
    }
    Ok(out)
}
