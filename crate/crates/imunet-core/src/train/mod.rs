//! Training protocol: subject-held-out fold construction, the Adam
//! optimization loop with validation-based best-model selection, and
//! evaluation orchestration from window predictions down to gait metrics.

use rand::seq::SliceRandom;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha12Rng;

use crate::datapipe::{arrange_layout, WindowSet};
use crate::kernel::{softmax_cross_entropy, argmax_classes, Adam, TensorBatch};
use crate::metrics::{evaluate_predictions, GaitMetrics, DEFAULT_STRIDE_TOL_MS};
use crate::model::Network;
use crate::{Error, Result};

pub const DEFAULT_EPOCHS: usize = 500;
pub const DEFAULT_BATCH_SIZE: usize = 100;
pub const DEFAULT_LEARNING_RATE: f64 = 0.01;
pub const DEFAULT_VAL_FRACTION: f64 = 0.10;
pub const DEFAULT_FOLDS: usize = 3;

/// Hyperparameters for one training run. `seed` drives the validation split,
/// batch shuffling, and weight init, so a config fixes the whole run.
#[derive(Debug, Clone, PartialEq)]
pub struct TrainConfig {
    pub epochs: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
    pub val_fraction: f64,
    pub seed: u64,
    pub folds: usize,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            epochs: DEFAULT_EPOCHS,
            batch_size: DEFAULT_BATCH_SIZE,
            learning_rate: DEFAULT_LEARNING_RATE,
            beta1: crate::kernel::ADAM_BETA1,
            beta2: crate::kernel::ADAM_BETA2,
            epsilon: crate::kernel::ADAM_EPS,
            val_fraction: DEFAULT_VAL_FRACTION,
            seed: 0,
            folds: DEFAULT_FOLDS,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.epochs == 0 || self.batch_size == 0 {
            return Err(Error::InvalidArgument(
                "epochs and batch_size must be >= 1".into(),
            ));
        }
        if !(self.val_fraction > 0.0 && self.val_fraction < 1.0) {
            return Err(Error::InvalidArgument(format!(
                "val_fraction must be in (0, 1), got {}",
                self.val_fraction
            )));
        }
        if self.folds == 0 {
            return Err(Error::InvalidArgument("folds must be >= 1".into()));
        }
        for (name, v) in [
            ("learning_rate", self.learning_rate),
            ("adam.beta1", self.beta1),
            ("adam.beta2", self.beta2),
            ("adam.epsilon", self.epsilon),
        ] {
            if !v.is_finite() || v <= 0.0 {
                return Err(Error::InvalidArgument(format!(
                    "{name} must be finite and positive, got {v}"
                )));
            }
        }
        Ok(())
    }

    /// Apply one `key=value` override. Keys are flat dotted paths.
    pub fn apply_kv(&mut self, key: &str, value: &str) -> Result<()> {
        let bad = |what: &str| {
            Error::InvalidArgument(format!("config key {key}: expected {what}, got {value:?}"))
        };
        match key {
            "epochs" => self.epochs = value.parse().map_err(|_| bad("integer"))?,
            "batch_size" => self.batch_size = value.parse().map_err(|_| bad("integer"))?,
            "learning_rate" => self.learning_rate = value.parse().map_err(|_| bad("number"))?,
            "adam.beta1" => self.beta1 = value.parse().map_err(|_| bad("number"))?,
            "adam.beta2" => self.beta2 = value.parse().map_err(|_| bad("number"))?,
            "adam.epsilon" => self.epsilon = value.parse().map_err(|_| bad("number"))?,
            "val_fraction" => self.val_fraction = value.parse().map_err(|_| bad("number"))?,
            "seed" => self.seed = value.parse().map_err(|_| bad("integer"))?,
            "folds" => self.folds = value.parse().map_err(|_| bad("integer"))?,
            _ => {
                return Err(Error::InvalidArgument(format!(
                    "unknown config key {key:?}"
                )))
            }
        }
        Ok(())
    }

    /// Parse a flat `key = value` config file body over the defaults.
    /// Blank lines and lines starting with `#` are ignored.
    pub fn from_kv_text(text: &str) -> Result<TrainConfig> {
        let mut cfg = TrainConfig::default();
        for (i, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let (k, v) = line.split_once('=').ok_or_else(|| {
                Error::InvalidArgument(format!(
                    "config line {}: expected key=value, got {line:?}",
                    i + 1
                ))
            })?;
            cfg.apply_kv(k.trim(), v.trim())?;
        }
        cfg.validate()?;
        Ok(cfg)
    }
}

/// One cross-validation fold: disjoint subject sets, and a train/val/test
/// partition of window indices into the originating window set.
#[derive(Debug, Clone, PartialEq)]
pub struct Fold {
    pub test_subjects: Vec<String>,
    pub train_subjects: Vec<String>,
    pub train_windows: Vec<usize>,
    pub val_windows: Vec<usize>,
    pub test_windows: Vec<usize>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct FoldPlan {
    pub folds: Vec<Fold>,
}

/// Build k subject-held-out folds. Subjects are sorted, fold i tests the
/// subjects whose sorted index is congruent to i mod k (with exactly k
/// subjects this is leave-one-subject-out). Validation windows are a seeded
/// uniform draw of floor(val_fraction * n) from the fold's training windows.
pub fn make_folds(
    ws: &WindowSet,
    k: usize,
    val_fraction: f64,
    seed: u64,
) -> Result<FoldPlan> {
    if k == 0 {
        return Err(Error::InvalidArgument("folds must be >= 1".into()));
    }
    if !(0.0..1.0).contains(&val_fraction) {
        return Err(Error::InvalidArgument(format!(
            "val_fraction must be in [0, 1), got {val_fraction}"
        )));
    }
    let mut subjects: Vec<String> = ws
        .windows
        .iter()
        .map(|w| w.subject_id.clone())
        .collect();
    subjects.sort();
    subjects.dedup();
    if subjects.len() < k {
        return Err(Error::InvalidArgument(format!(
            "need at least {} subjects for {} folds, found {}",
            k,
            k,
            subjects.len()
        )));
    }

    let mut rng = ChaCha12Rng::seed_from_u64(seed);
    let mut folds = Vec::with_capacity(k);
    for fold in 0..k {
        let test_subjects: Vec<String> = subjects
            .iter()
            .enumerate()
            .filter(|(i, _)| i % k == fold)
            .map(|(_, s)| s.clone())
            .collect();
        let train_subjects: Vec<String> = subjects
            .iter()
            .filter(|s| !test_subjects.contains(s))
            .cloned()
            .collect();

        let mut test_windows = Vec::new();
        let mut pool = Vec::new();
        for (i, w) in ws.windows.iter().enumerate() {
            if test_subjects.contains(&w.subject_id) {
                test_windows.push(i);
            } else {
                pool.push(i);
            }
        }
        pool.shuffle(&mut rng);
        let n_val = (val_fraction * pool.len() as f64).floor() as usize;
        let mut val_windows: Vec<usize> = pool[..n_val].to_vec();
        let mut train_windows: Vec<usize> = pool[n_val..].to_vec();
        val_windows.sort_unstable();
        train_windows.sort_unstable();

        folds.push(Fold {
            test_subjects,
            train_subjects,
            train_windows,
            val_windows,
            test_windows,
        });
    }
    Ok(FoldPlan { folds })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct HistoryRow {
    pub epoch: usize,
    pub train_loss: f64,
    pub val_loss: f64,
}

pub fn history_to_csv(history: &[HistoryRow]) -> String {
    let mut out = String::from("epoch,train_loss,val_loss\n");
    for row in history {
        out.push_str(&format!("{},{},{}\n", row.epoch, row.train_loss, row.val_loss));
    }
    out
}

/// Stack the chosen windows into one input batch plus flattened labels.
fn assemble_batch(ws: &WindowSet, indices: &[usize], net: &Network) -> Result<(TensorBatch, Vec<u8>)> {
    let mut tensors = Vec::with_capacity(indices.len());
    let mut labels = Vec::with_capacity(indices.len() * ws.window_len);
    for &i in indices {
        let w = ws.windows.get(i).ok_or_else(|| {
            Error::InvalidArgument(format!(
                "window index {} out of range ({} windows)",
                i,
                ws.windows.len()
            ))
        })?;
        tensors.push(arrange_layout(&w.signal, ws.window_len, net.spec.layout)?);
        labels.extend_from_slice(&w.labels);
    }
    Ok((TensorBatch::pack(&tensors)?, labels))
}

/// Mean cross-entropy per sample over a window list, eval mode, fixed order.
fn eval_loss(net: &Network, ws: &WindowSet, indices: &[usize], batch_size: usize) -> Result<f64> {
    let mut sum = 0.0;
    let mut count = 0usize;
    for chunk in indices.chunks(batch_size.max(1)) {
        let (x, y) = assemble_batch(ws, chunk, net)?;
        let logits = net.forward(&x)?;
        let (loss, _) = softmax_cross_entropy(&logits, &y)?;
        sum += loss * y.len() as f64;
        count += y.len();
    }
    if count == 0 {
        return Err(Error::Empty("validation windows"));
    }
    Ok(sum / count as f64)
}

/// Run the optimization loop. Each epoch visits every training window once in
/// seeded shuffled mini-batches, then measures validation loss in eval mode;
/// the returned network is a snapshot of the epoch with the lowest validation
/// loss (parameters and normalization statistics included). With an empty
/// validation list, selection falls back to the epoch train loss.
pub fn train_model(
    net: &mut Network,
    ws: &WindowSet,
    train_idx: &[usize],
    val_idx: &[usize],
    cfg: &TrainConfig,
) -> Result<(Network, Vec<HistoryRow>)> {
    cfg.validate()?;
    if train_idx.is_empty() {
        return Err(Error::Empty("training windows"));
    }
    if ws.window_len != net.spec.window_len {
        return Err(Error::Shape(format!(
            "window set holds {}-sample windows, model expects {}",
            ws.window_len, net.spec.window_len
        )));
    }

    let mut adam = Adam::with_hyperparams(cfg.learning_rate, cfg.beta1, cfg.beta2, cfg.epsilon);
    let mut rng = ChaCha12Rng::seed_from_u64(cfg.seed);
    let mut order: Vec<usize> = train_idx.to_vec();
    let mut history = Vec::with_capacity(cfg.epochs);
    let mut best: Option<(f64, Network)> = None;

    for epoch in 1..=cfg.epochs {
        order.shuffle(&mut rng);
        let mut loss_sum = 0.0;
        let mut samples = 0usize;
        for chunk in order.chunks(cfg.batch_size) {
            let (x, y) = assemble_batch(ws, chunk, net)?;
            net.zero_grads();
            let (logits, trace) = net.forward_train(&x)?;
            let (loss, grad) = softmax_cross_entropy(&logits, &y)?;
            if !loss.is_finite() {
                return Err(Error::Numeric(format!(
                    "training loss became {loss} at epoch {epoch}"
                )));
            }
            net.backward(trace, &grad)?;
            adam.begin_step();
            net.optimizer_step(&mut adam)?;
            loss_sum += loss * y.len() as f64;
            samples += y.len();
        }
        let train_loss = loss_sum / samples as f64;
        let val_loss = if val_idx.is_empty() {
            train_loss
        } else {
            eval_loss(net, ws, val_idx, cfg.batch_size)?
        };
        history.push(HistoryRow {
            epoch,
            train_loss,
            val_loss,
        });
        let improved = match &best {
            None => true,
            Some((best_val, _)) => val_loss < *best_val,
        };
        if improved {
            best = Some((val_loss, net.clone()));
        }
    }
    let (_, best_net) = best.expect("epochs >= 1 guarantees a snapshot");
    Ok((best_net, history))
}

/// Predicted phases per window, in the order of `indices`.
pub fn predict_windows(
    net: &Network,
    ws: &WindowSet,
    indices: &[usize],
    batch_size: usize,
) -> Result<Vec<Vec<u8>>> {
    let mut out = Vec::with_capacity(indices.len());
    for chunk in indices.chunks(batch_size.max(1)) {
        let (x, _) = assemble_batch(ws, chunk, net)?;
        let logits = net.forward(&x)?;
        let phases = argmax_classes(&logits)?;
        for (j, _) in chunk.iter().enumerate() {
            out.push(phases[j * ws.window_len..(j + 1) * ws.window_len].to_vec());
        }
    }
    Ok(out)
}

/// Group windows by recording, order them by start sample, concatenate the
/// per-window sequences, and pool gait metrics over the recordings.
pub fn assemble_and_score(
    predictions: &[Vec<u8>],
    ws: &WindowSet,
    indices: &[usize],
    rate_hz: f64,
) -> Result<GaitMetrics> {
    if predictions.len() != indices.len() {
        return Err(Error::Shape(format!(
            "{} prediction windows for {} indices",
            predictions.len(),
            indices.len()
        )));
    }
    let mut by_rec: Vec<(String, Vec<(usize, usize)>)> = Vec::new();
    for (pos, &i) in indices.iter().enumerate() {
        let w = &ws.windows[i];
        match by_rec.iter_mut().find(|(id, _)| *id == w.rec_id) {
            Some((_, list)) => list.push((w.start, pos)),
            None => by_rec.push((w.rec_id.clone(), vec![(w.start, pos)])),
        }
    }
    let mut pairs = Vec::with_capacity(by_rec.len());
    for (_, mut list) in by_rec {
        list.sort_unstable();
        let mut pred = Vec::with_capacity(list.len() * ws.window_len);
        let mut truth = Vec::with_capacity(list.len() * ws.window_len);
        for (_, pos) in list {
            pred.extend_from_slice(&predictions[pos]);
            truth.extend_from_slice(&ws.windows[indices[pos]].labels);
        }
        pairs.push((pred, truth));
    }
    evaluate_predictions(&pairs, rate_hz, DEFAULT_STRIDE_TOL_MS)
}

/// Forward the chosen test windows and score them against their labels.
pub fn evaluate_model(
    net: &Network,
    ws: &WindowSet,
    indices: &[usize],
    rate_hz: f64,
) -> Result<GaitMetrics> {
    let predictions = predict_windows(net, ws, indices, 16)?;
    assemble_and_score(&predictions, ws, indices, rate_hz)
}
