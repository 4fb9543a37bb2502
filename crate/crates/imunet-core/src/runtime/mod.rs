//! Streaming inference: checkpoint save/load, a push-driven sample-to-event
//! engine for live 20 Hz streams, and batch-equivalent execution in both
//! single-threaded and two-stage pipelined forms.
//!
//! Windows are non-overlapping: every `window_len` pushed samples trigger one
//! forward pass whose per-sample phases are final. Phase transitions become
//! gait events, including transitions that straddle a window boundary.

use std::sync::mpsc;
use std::time::Instant;

use crate::container::{read_container, write_container, NamedArray, CHECKPOINT_MAGIC};
use crate::datapipe::{arrange_layout, ACCEL_RANGE_G, GYRO_RANGE_DPS, NUM_AXES};
use crate::kernel::{argmax_classes, TensorBatch};
use crate::model::{Network, NetworkSpec};
use crate::{Error, Result};

/// Write the model spec and every parameter/statistics array to the
/// versioned checkpoint container.
pub fn save_checkpoint(net: &Network, path: &std::path::Path) -> Result<()> {
    let mut header = Vec::new();
    for line in net.spec.to_kv().lines() {
        let (k, v) = line.split_once('=').expect("canonical kv line");
        header.push((k.to_string(), v.to_string()));
    }
    let arrays: Vec<NamedArray> = net
        .state_entries()
        .into_iter()
        .map(|(name, shape, data)| NamedArray {
            name,
            shape,
            data,
        })
        .collect();
    write_container(path, CHECKPOINT_MAGIC, &header, &arrays)
}

/// Rebuild a network from a checkpoint, verifying checksum, version, spec
/// fields, and every array's name and shape.
pub fn load_checkpoint(path: &std::path::Path) -> Result<Network> {
    let c = read_container(path, CHECKPOINT_MAGIC)?;
    let mut text = String::new();
    for (k, v) in &c.header {
        text.push_str(k);
        text.push('=');
        text.push_str(v);
        text.push('\n');
    }
    let spec = NetworkSpec::from_kv(&text)?;
    let mut net = Network::build(spec, 0)?;

    let expected = net.state_entries();
    if expected.len() != c.arrays.len() {
        return Err(Error::Checkpoint {
            field: "arrays".to_string(),
            reason: format!("expected {} arrays, found {}", expected.len(), c.arrays.len()),
        });
    }
    for (name, shape, _) in &expected {
        let a = c.array(name).ok_or_else(|| Error::Checkpoint {
            field: name.clone(),
            reason: "array missing".to_string(),
        })?;
        if &a.shape != shape {
            return Err(Error::Checkpoint {
                field: name.clone(),
                reason: format!("shape {:?}, expected {:?}", a.shape, shape),
            });
        }
    }
    let entries: Vec<(String, Vec<f64>)> = c
        .arrays
        .into_iter()
        .map(|a| (a.name, a.data))
        .collect();
    net.load_state_entries(&entries)?;
    Ok(net)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum EventKind {
    StanceOnset,
    SwingOnset,
}

impl EventKind {
    pub fn as_str(&self) -> &'static str {
        match self {
            EventKind::StanceOnset => "stance_onset",
            EventKind::SwingOnset => "swing_onset",
        }
    }
}

/// A phase transition in the emitted label stream.
#[derive(Debug, Clone, PartialEq)]
pub struct GaitEvent {
    pub kind: EventKind,
    pub time_s: f64,
    pub source_window: usize,
}

/// Wall-clock statistics over per-window forward passes, in milliseconds.
#[derive(Debug, Clone, PartialEq)]
pub struct LatencyStats {
    pub count: usize,
    pub min_ms: f64,
    pub max_ms: f64,
    sum_ms: f64,
}

impl Default for LatencyStats {
    fn default() -> Self {
        LatencyStats {
            count: 0,
            min_ms: f64::INFINITY,
            max_ms: f64::NEG_INFINITY,
            sum_ms: 0.0,
        }
    }
}

impl LatencyStats {
    pub fn record(&mut self, ms: f64) {
        self.count += 1;
        self.min_ms = self.min_ms.min(ms);
        self.max_ms = self.max_ms.max(ms);
        self.sum_ms += ms;
    }

    pub fn mean_ms(&self) -> f64 {
        if self.count == 0 {
            0.0
        } else {
            self.sum_ms / self.count as f64
        }
    }
}

/// Result of one triggered inference.
#[derive(Debug, Clone, PartialEq)]
pub struct WindowOutput {
    pub index: usize,
    pub phases: Vec<u8>,
    pub events: Vec<GaitEvent>,
    pub latency_ms: f64,
}

/// Scale one raw sample by the sensor ranges; returns the normalized sample
/// and how many axes exceeded the nominal range (values are kept, not
/// clamped, matching the batch preprocessing rule).
pub fn normalize_sample(sample: &[f64; NUM_AXES]) -> ([f64; NUM_AXES], usize) {
    let mut out = [0.0; NUM_AXES];
    let mut oor = 0;
    for (a, (dst, &src)) in out.iter_mut().zip(sample.iter()).enumerate() {
        let range = if a < 3 { ACCEL_RANGE_G } else { GYRO_RANGE_DPS };
        *dst = src / range;
        if dst.abs() > 1.0 {
            oor += 1;
        }
    }
    (out, oor)
}

/// Forward one full window and convert transitions to events. `last_phase`
/// carries the final phase of the previous window so boundary-straddling
/// transitions are still reported.
fn infer_on(
    net: &Network,
    window_len: usize,
    samples: &[[f64; NUM_AXES]],
    times: &[f64],
    last_phase: Option<u8>,
    index: usize,
) -> Result<WindowOutput> {
    debug_assert_eq!(samples.len(), window_len);
    let mut flat = vec![0.0; NUM_AXES * window_len];
    for (i, s) in samples.iter().enumerate() {
        for (a, &v) in s.iter().enumerate() {
            flat[a * window_len + i] = v;
        }
    }
    let tensor = arrange_layout(&flat, window_len, net.spec.layout)?;
    let x = TensorBatch::pack(&[tensor])?;

    let start = Instant::now();
    let logits = net.forward(&x)?;
    let latency_ms = start.elapsed().as_secs_f64() * 1e3;

    let phases = argmax_classes(&logits)?;
    let events = events_from_phases(&phases, times, last_phase, index);
    Ok(WindowOutput {
        index,
        phases,
        events,
        latency_ms,
    })
}

/// Turn a finalized phase sequence into onset events. `last_phase` is the
/// final phase of the preceding window (None at stream start, where the
/// first sample only establishes the initial phase).
pub fn events_from_phases(
    phases: &[u8],
    times: &[f64],
    last_phase: Option<u8>,
    source_window: usize,
) -> Vec<GaitEvent> {
    let mut events = Vec::new();
    let mut prev = last_phase;
    for (i, &p) in phases.iter().enumerate() {
        if let Some(q) = prev {
            if q != p {
                events.push(GaitEvent {
                    kind: if p == 0 {
                        EventKind::StanceOnset
                    } else {
                        EventKind::SwingOnset
                    },
                    time_s: times[i],
                    source_window,
                });
            }
        }
        prev = Some(p);
    }
    events
}

/// Push-driven streaming engine. Feed samples with nondecreasing timestamps;
/// every `window_len`-th push triggers inference on the buffered window.
pub struct StreamState {
    net: Network,
    rate_hz: f64,
    buf: Vec<[f64; NUM_AXES]>,
    times: Vec<f64>,
    last_t: Option<f64>,
    windows_done: usize,
    last_phase: Option<u8>,
    out_of_range: usize,
    latency: LatencyStats,
}

impl StreamState {
    /// The runner refuses models whose pooling ladder was laid out for the
    /// full-rate input: at 20 Hz the stream needs the pool factor 2 variant.
    pub fn new(net: Network, rate_hz: f64) -> Result<StreamState> {
        if !(rate_hz.is_finite() && rate_hz > 0.0) {
            return Err(Error::InvalidArgument(format!(
                "stream rate must be positive, got {rate_hz}"
            )));
        }
        if (rate_hz - 20.0).abs() < 1e-9 && net.spec.pool_k != 2 {
            return Err(Error::InvalidArgument(format!(
                "checkpoint uses pool factor {} (a 1000 Hz layout); the 20 Hz \
                 stream runner requires a pool factor 2 model",
                net.spec.pool_k
            )));
        }
        Ok(StreamState {
            net,
            rate_hz,
            buf: Vec::new(),
            times: Vec::new(),
            last_t: None,
            windows_done: 0,
            last_phase: None,
            out_of_range: 0,
            latency: LatencyStats::default(),
        })
    }

    pub fn window_len(&self) -> usize {
        self.net.spec.window_len
    }

    pub fn rate_hz(&self) -> f64 {
        self.rate_hz
    }

    pub fn windows_done(&self) -> usize {
        self.windows_done
    }

    pub fn buffered(&self) -> usize {
        self.buf.len()
    }

    pub fn out_of_range(&self) -> usize {
        self.out_of_range
    }

    pub fn latency(&self) -> &LatencyStats {
        &self.latency
    }

    pub fn push_sample(
        &mut self,
        t_s: f64,
        sample: &[f64; NUM_AXES],
    ) -> Result<Option<WindowOutput>> {
        if let Some(last) = self.last_t {
            if t_s < last {
                return Err(Error::TimeRegression { t_s, last_s: last });
            }
        }
        self.last_t = Some(t_s);
        let (norm, oor) = normalize_sample(sample);
        self.out_of_range += oor;
        self.buf.push(norm);
        self.times.push(t_s);
        if self.buf.len() == self.window_len() {
            Ok(Some(self.infer_window()?))
        } else {
            Ok(None)
        }
    }

    /// Run the model on the buffered window; requires a full buffer.
    pub fn infer_window(&mut self) -> Result<WindowOutput> {
        let w = self.window_len();
        if self.buf.len() != w {
            return Err(Error::InvalidArgument(format!(
                "window not full: {} of {} samples buffered",
                self.buf.len(),
                w
            )));
        }
        let out = infer_on(
            &self.net,
            w,
            &self.buf,
            &self.times,
            self.last_phase,
            self.windows_done,
        )?;
        self.last_phase = out.phases.last().copied();
        self.windows_done += 1;
        self.latency.record(out.latency_ms);
        self.buf.clear();
        self.times.clear();
        Ok(out)
    }
}

/// Everything a finished stream produced. `phases` covers finalized windows
/// only; `leftover` counts trailing samples still buffered at end of input.
#[derive(Debug, Clone, PartialEq)]
pub struct StreamOutput {
    pub phases: Vec<u8>,
    pub events: Vec<GaitEvent>,
    pub latency: LatencyStats,
    pub latencies_ms: Vec<f64>,
    pub windows: usize,
    pub out_of_range: usize,
    pub leftover: usize,
}

/// Drive a whole sample sequence through one StreamState.
pub fn run_stream_single(
    net: Network,
    rate_hz: f64,
    samples: &[(f64, [f64; NUM_AXES])],
) -> Result<StreamOutput> {
    let mut state = StreamState::new(net, rate_hz)?;
    let mut phases = Vec::new();
    let mut events = Vec::new();
    let mut latencies_ms = Vec::new();
    for (t, s) in samples {
        if let Some(out) = state.push_sample(*t, s)? {
            phases.extend_from_slice(&out.phases);
            events.extend(out.events);
            latencies_ms.push(out.latency_ms);
        }
    }
    Ok(StreamOutput {
        phases,
        events,
        latency: state.latency.clone(),
        latencies_ms,
        windows: state.windows_done,
        out_of_range: state.out_of_range,
        leftover: state.buf.len(),
    })
}

struct FullWindow {
    times: Vec<f64>,
    samples: Vec<[f64; NUM_AXES]>,
    out_of_range: usize,
}

/// Two-stage pipeline: an ingestion thread normalizes and assembles windows,
/// pushing them through a bounded queue to the inference stage that owns the
/// network. Emits exactly what [`run_stream_single`] emits.
pub fn run_stream_threaded(
    net: Network,
    rate_hz: f64,
    samples: &[(f64, [f64; NUM_AXES])],
    queue_windows: usize,
) -> Result<StreamOutput> {
    // reuse the constructor's model/rate validation
    let state = StreamState::new(net, rate_hz)?;
    let window_len = state.window_len();
    let net = state.net;

    let (tx, rx) = mpsc::sync_channel::<Result<FullWindow>>(queue_windows.max(1));
    std::thread::scope(|scope| {
        scope.spawn(move || {
            let mut last_t: Option<f64> = None;
            let mut buf = Vec::with_capacity(window_len);
            let mut times = Vec::with_capacity(window_len);
            let mut oor_acc = 0usize;
            for (t, s) in samples {
                if let Some(last) = last_t {
                    if *t < last {
                        let _ = tx.send(Err(Error::TimeRegression {
                            t_s: *t,
                            last_s: last,
                        }));
                        return;
                    }
                }
                last_t = Some(*t);
                let (norm, oor) = normalize_sample(s);
                oor_acc += oor;
                buf.push(norm);
                times.push(*t);
                if buf.len() == window_len {
                    let msg = FullWindow {
                        times: std::mem::take(&mut times),
                        samples: std::mem::take(&mut buf),
                        out_of_range: std::mem::take(&mut oor_acc),
                    };
                    if tx.send(Ok(msg)).is_err() {
                        return;
                    }
                }
            }
            // trailing partial window: its normalization counts still apply
            let tail = FullWindow {
                times: Vec::new(),
                samples: Vec::new(),
                out_of_range: oor_acc,
            };
            let _ = tx.send(Ok(tail));
        });

        let mut phases = Vec::new();
        let mut events = Vec::new();
        let mut latency = LatencyStats::default();
        let mut latencies_ms = Vec::new();
        let mut windows = 0usize;
        let mut out_of_range = 0usize;
        let mut last_phase: Option<u8> = None;
        while let Ok(msg) = rx.recv() {
            let fw = msg?;
            out_of_range += fw.out_of_range;
            if fw.samples.is_empty() {
                continue;
            }
            let out = infer_on(&net, window_len, &fw.samples, &fw.times, last_phase, windows)?;
            last_phase = out.phases.last().copied();
            latency.record(out.latency_ms);
            latencies_ms.push(out.latency_ms);
            windows += 1;
            phases.extend_from_slice(&out.phases);
            events.extend(out.events);
        }
        Ok(StreamOutput {
            phases,
            events,
            latency,
            latencies_ms,
            windows,
            out_of_range,
            leftover: samples.len() - windows * window_len,
        })
    })
}
