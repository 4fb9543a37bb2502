//! On-disk dataset formats.
//!
//! A recording is three sibling files sharing a stem:
//! `<id>.csv` with header `t,ax,ay,az,gx,gy,gz` (seconds, g, deg/s),
//! `<id>.meta` with `key=value` lines (subject, activity, speed_kmh, strike,
//! rate_hz), and `<id>.labels.csv` with header `t,phase` listing phase onset
//! events. Windowed datasets are stored in the shared binary container with
//! signals, labels, window starts, and a recording provenance table.
//!
//! Floats are written with Rust's shortest round-trip formatting, so
//! write-then-read is lossless.

use std::path::{Path, PathBuf};

use crate::container::{read_container, write_container, NamedArray, DATASET_MAGIC};
use crate::datapipe::{
    Activity, ImuRecording, PhaseEventList, Strike, Window, WindowSet, NUM_AXES,
};
use crate::model::InputLayout;
use crate::{Error, Result};

pub const IMU_CSV_HEADER: &str = "t,ax,ay,az,gx,gy,gz";
pub const LABEL_CSV_HEADER: &str = "t,phase";
const LABEL_SUFFIX: &str = ".labels.csv";
const META_SUFFIX: &str = ".meta";

fn read_text(path: &Path) -> Result<String> {
    std::fs::read_to_string(path).map_err(|e| Error::io(path.display().to_string(), e))
}

fn write_text(path: &Path, text: &str) -> Result<()> {
    std::fs::write(path, text).map_err(|e| Error::io(path.display().to_string(), e))
}

fn parse_f64(path: &Path, line_no: usize, field: &str, s: &str) -> Result<f64> {
    s.trim().parse::<f64>().map_err(|_| {
        Error::data(
            path.display().to_string(),
            format!("line {line_no}: field {field} is not a number: {s:?}"),
        )
    })
}

/// Paths of the three files that make up one stored recording.
pub fn recording_paths(dir: &Path, id: &str) -> (PathBuf, PathBuf, PathBuf) {
    (
        dir.join(format!("{id}.csv")),
        dir.join(format!("{id}{META_SUFFIX}")),
        dir.join(format!("{id}{LABEL_SUFFIX}")),
    )
}

pub fn write_recording(
    dir: &Path,
    recording: &ImuRecording,
    events: &PhaseEventList,
) -> Result<String> {
    let id = recording.id();
    let (csv_path, meta_path, label_path) = recording_paths(dir, &id);

    let mut csv = String::with_capacity(recording.samples.len() * 48);
    csv.push_str(IMU_CSV_HEADER);
    csv.push('\n');
    for (i, s) in recording.samples.iter().enumerate() {
        let t = i as f64 / recording.rate_hz;
        csv.push_str(&format!(
            "{},{},{},{},{},{},{}\n",
            t, s[0], s[1], s[2], s[3], s[4], s[5]
        ));
    }
    write_text(&csv_path, &csv)?;

    let meta = format!(
        "subject={}\nactivity={}\nspeed_kmh={}\nstrike={}\nrate_hz={}\n",
        recording.subject_id,
        recording.activity.as_str(),
        recording.speed_kmh,
        recording.strike.as_str(),
        recording.rate_hz
    );
    write_text(&meta_path, &meta)?;

    let mut labels = String::new();
    labels.push_str(LABEL_CSV_HEADER);
    labels.push('\n');
    for &(t, phase) in events.events() {
        labels.push_str(&format!("{t},{phase}\n"));
    }
    write_text(&label_path, &labels)?;
    Ok(id)
}

pub fn read_recording(dir: &Path, id: &str) -> Result<(ImuRecording, PhaseEventList)> {
    let (csv_path, meta_path, label_path) = recording_paths(dir, id);

    let meta_text = read_text(&meta_path)?;
    let mut subject = None;
    let mut activity = None;
    let mut speed = None;
    let mut strike = None;
    let mut rate = None;
    for (i, line) in meta_text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let (k, v) = line.split_once('=').ok_or_else(|| {
            Error::data(
                meta_path.display().to_string(),
                format!("line {}: expected key=value, got {line:?}", i + 1),
            )
        })?;
        match k.trim() {
            "subject" => subject = Some(v.trim().to_string()),
            "activity" => activity = Some(Activity::parse(v.trim())?),
            "speed_kmh" => speed = Some(parse_f64(&meta_path, i + 1, "speed_kmh", v)?),
            "strike" => strike = Some(Strike::parse(v.trim())?),
            "rate_hz" => rate = Some(parse_f64(&meta_path, i + 1, "rate_hz", v)?),
            other => {
                return Err(Error::data(
                    meta_path.display().to_string(),
                    format!("unknown metadata key {other:?}"),
                ))
            }
        }
    }
    let missing = |what: &str| {
        Error::data(
            meta_path.display().to_string(),
            format!("missing metadata key {what:?}"),
        )
    };
    let subject_id = subject.ok_or_else(|| missing("subject"))?;
    let activity = activity.ok_or_else(|| missing("activity"))?;
    let speed_kmh = speed.ok_or_else(|| missing("speed_kmh"))?;
    let strike = strike.ok_or_else(|| missing("strike"))?;
    let rate_hz = rate.ok_or_else(|| missing("rate_hz"))?;

    let csv_text = read_text(&csv_path)?;
    let samples = parse_imu_csv(&csv_text, &csv_path)?;
    let recording = ImuRecording {
        rate_hz,
        samples: samples.into_iter().map(|(_, s)| s).collect(),
        subject_id,
        activity,
        speed_kmh,
        strike,
    };

    let label_text = read_text(&label_path)?;
    let events = parse_label_csv(&label_text, &label_path)?;
    Ok((recording, events))
}

/// Parse `t,ax,..,gz` rows; timestamps are returned but windowing uses sample
/// index, so uneven spacing is tolerated here and judged by the caller.
pub fn parse_imu_csv(text: &str, path: &Path) -> Result<Vec<(f64, [f64; NUM_AXES])>> {
    let mut lines = text.lines().enumerate();
    match lines.next() {
        Some((_, h)) if h.trim() == IMU_CSV_HEADER => {}
        Some((_, h)) => {
            return Err(Error::data(
                path.display().to_string(),
                format!("expected header {IMU_CSV_HEADER:?}, got {h:?}"),
            ))
        }
        None => return Err(Error::data(path.display().to_string(), "empty file")),
    }
    let mut out = Vec::new();
    for (i, line) in lines {
        if line.trim().is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split(',').collect();
        if fields.len() != 1 + NUM_AXES {
            return Err(Error::data(
                path.display().to_string(),
                format!("line {}: expected {} fields, got {}", i + 1, 1 + NUM_AXES, fields.len()),
            ));
        }
        let t = parse_f64(path, i + 1, "t", fields[0])?;
        let mut s = [0.0; NUM_AXES];
        for (a, f) in s.iter_mut().zip(&fields[1..]) {
            *a = parse_f64(path, i + 1, "sample", f)?;
        }
        out.push((t, s));
    }
    Ok(out)
}

pub fn parse_label_csv(text: &str, path: &Path) -> Result<PhaseEventList> {
    let mut lines = text.lines().enumerate();
    match lines.next() {
        Some((_, h)) if h.trim() == LABEL_CSV_HEADER => {}
        Some((_, h)) => {
            return Err(Error::data(
                path.display().to_string(),
                format!("expected header {LABEL_CSV_HEADER:?}, got {h:?}"),
            ))
        }
        None => return Err(Error::data(path.display().to_string(), "empty file")),
    }
    let mut events = Vec::new();
    for (i, line) in lines {
        if line.trim().is_empty() {
            continue;
        }
        let (t, phase) = line.split_once(',').ok_or_else(|| {
            Error::data(
                path.display().to_string(),
                format!("line {}: expected t,phase", i + 1),
            )
        })?;
        let t = parse_f64(path, i + 1, "t", t)?;
        let phase: i64 = phase.trim().parse().map_err(|_| {
            Error::data(
                path.display().to_string(),
                format!("line {}: phase is not an integer: {phase:?}", i + 1),
            )
        })?;
        if phase != 0 && phase != 1 {
            return Err(Error::BadLabel(phase));
        }
        events.push((t, phase as u8));
    }
    PhaseEventList::new(events)
}

/// Recording ids present in a directory (stems of non-label `.csv` files),
/// sorted for deterministic traversal.
pub fn list_recordings(dir: &Path) -> Result<Vec<String>> {
    let entries = std::fs::read_dir(dir).map_err(|e| Error::io(dir.display().to_string(), e))?;
    let mut ids = Vec::new();
    for entry in entries {
        let entry = entry.map_err(|e| Error::io(dir.display().to_string(), e))?;
        let name = entry.file_name();
        let name = name.to_string_lossy();
        if let Some(stem) = name.strip_suffix(".csv") {
            if !name.ends_with(LABEL_SUFFIX) {
                ids.push(stem.to_string());
            }
        }
    }
    ids.sort();
    Ok(ids)
}

/// Write a window set to the binary dataset container. The recording table
/// lives in the header (`rec.<i>=rec_id|subject_id`); per-window provenance
/// is stored as `rec_index` and `starts` arrays alongside signals and labels.
/// `layout` records which input arrangement the windows were prepared for.
pub fn save_window_set(path: &Path, ws: &WindowSet, layout: InputLayout) -> Result<()> {
    let n = ws.windows.len();
    let w = ws.window_len;

    let mut rec_table: Vec<(String, String)> = Vec::new();
    let mut rec_index = Vec::with_capacity(n);
    for win in &ws.windows {
        let key = (win.rec_id.clone(), win.subject_id.clone());
        let idx = match rec_table.iter().position(|r| *r == key) {
            Some(i) => i,
            None => {
                rec_table.push(key);
                rec_table.len() - 1
            }
        };
        rec_index.push(idx as f64);
    }

    let mut header = vec![
        ("kind".to_string(), "windows".to_string()),
        ("rate_hz".to_string(), ws.rate_hz.to_string()),
        ("window_len".to_string(), w.to_string()),
        ("stride".to_string(), ws.stride.to_string()),
        ("layout".to_string(), layout.as_str().to_string()),
        ("n_windows".to_string(), n.to_string()),
        ("n_recordings".to_string(), rec_table.len().to_string()),
    ];
    for (i, (rec_id, subject_id)) in rec_table.iter().enumerate() {
        if rec_id.contains('|') || subject_id.contains('|') {
            return Err(Error::InvalidArgument(format!(
                "recording id {rec_id:?} / subject {subject_id:?} may not contain '|'"
            )));
        }
        header.push((format!("rec.{i}"), format!("{rec_id}|{subject_id}")));
    }

    let mut signals = Vec::with_capacity(n * NUM_AXES * w);
    let mut labels = Vec::with_capacity(n * w);
    let mut starts = Vec::with_capacity(n);
    for win in &ws.windows {
        signals.extend_from_slice(&win.signal);
        labels.extend(win.labels.iter().map(|&b| b as f64));
        starts.push(win.start as f64);
    }

    let arrays = vec![
        NamedArray::new("signals", vec![n, NUM_AXES, w], signals)?,
        NamedArray::new("labels", vec![n, w], labels)?,
        NamedArray::new("starts", vec![n], starts)?,
        NamedArray::new("rec_index", vec![n], rec_index)?,
    ];
    write_container(path, DATASET_MAGIC, &header, &arrays)
}

pub fn load_window_set(path: &Path) -> Result<(WindowSet, InputLayout)> {
    let c = read_container(path, DATASET_MAGIC)?;
    let field = |key: &str| -> Result<&str> {
        c.header_get(key).ok_or_else(|| Error::Checkpoint {
            field: key.to_string(),
            reason: "missing from header".to_string(),
        })
    };
    let parse_usize = |key: &str| -> Result<usize> {
        field(key)?.parse().map_err(|_| Error::Checkpoint {
            field: key.to_string(),
            reason: format!("not an integer: {:?}", c.header_get(key).unwrap_or("")),
        })
    };
    let rate_hz: f64 = field("rate_hz")?.parse().map_err(|_| Error::Checkpoint {
        field: "rate_hz".to_string(),
        reason: "not a number".to_string(),
    })?;
    let window_len = parse_usize("window_len")?;
    let stride = parse_usize("stride")?;
    let layout = InputLayout::parse(field("layout")?)?;
    let n = parse_usize("n_windows")?;
    let n_rec = parse_usize("n_recordings")?;

    let mut rec_table = Vec::with_capacity(n_rec);
    for i in 0..n_rec {
        let key = format!("rec.{i}");
        let v = field(&key)?;
        let (rec_id, subject_id) = v.split_once('|').ok_or_else(|| Error::Checkpoint {
            field: key.clone(),
            reason: format!("expected rec_id|subject_id, got {v:?}"),
        })?;
        rec_table.push((rec_id.to_string(), subject_id.to_string()));
    }

    let array = |name: &str, shape: &[usize]| -> Result<&NamedArray> {
        let a = c.array(name).ok_or_else(|| Error::Checkpoint {
            field: name.to_string(),
            reason: "array missing".to_string(),
        })?;
        if a.shape != shape {
            return Err(Error::Checkpoint {
                field: name.to_string(),
                reason: format!("shape {:?} does not match header {:?}", a.shape, shape),
            });
        }
        Ok(a)
    };
    let signals = array("signals", &[n, NUM_AXES, window_len])?;
    let labels = array("labels", &[n, window_len])?;
    let starts = array("starts", &[n])?;
    let rec_index = array("rec_index", &[n])?;

    let mut windows = Vec::with_capacity(n);
    for i in 0..n {
        let ri = rec_index.data[i];
        if ri < 0.0 || ri.fract() != 0.0 || ri as usize >= rec_table.len() {
            return Err(Error::Checkpoint {
                field: "rec_index".to_string(),
                reason: format!("window {i}: invalid recording index {ri}"),
            });
        }
        let (rec_id, subject_id) = rec_table[ri as usize].clone();
        let mut win_labels = Vec::with_capacity(window_len);
        for &v in &labels.data[i * window_len..(i + 1) * window_len] {
            if v != 0.0 && v != 1.0 {
                return Err(Error::Checkpoint {
                    field: "labels".to_string(),
                    reason: format!("window {i}: label {v} is not 0 or 1"),
                });
            }
            win_labels.push(v as u8);
        }
        windows.push(Window {
            signal: signals.data[i * NUM_AXES * window_len..(i + 1) * NUM_AXES * window_len]
                .to_vec(),
            labels: win_labels,
            rec_id,
            subject_id,
            start: starts.data[i] as usize,
        });
    }
    Ok((
        WindowSet {
            windows,
            window_len,
            stride,
            rate_hz,
        },
        layout,
    ))
}
