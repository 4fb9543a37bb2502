//! Acceptance gate: one test per criterion, each printing a single
//! PASS/FAIL verdict (shown with --nocapture, and always on failure).

mod common;

use common::*;
use imunet_core::datapipe::{
    arrange_layout, downsample_random, normalize, synchronize_labels, window_count, WindowMode,
};
use imunet_core::kernel::{argmax_classes, softmax_cross_entropy, Adam, TensorBatch};
use imunet_core::metrics::evaluate_predictions;
use imunet_core::model::{covers_half_window, receptive_field, InputLayout, Network, NetworkSpec};
use imunet_core::runtime::{
    load_checkpoint, normalize_sample, run_stream_single, run_stream_threaded, save_checkpoint,
    EventKind,
};
use imunet_core::synth::{synth_dataset, synth_recording, GaitProfile};
use imunet_core::train::{evaluate_model, make_folds, train_model, TrainConfig};
use imunet_core::datapipe::Strike;
use rand::Rng;
use std::time::Instant;

fn verdict(tag: &str, label: &str, pass: bool, detail: String) {
    let v = if pass { "PASS" } else { "FAIL" };
    println!("ACCEPTANCE {tag} {label}: {v} ({detail})");
    assert!(pass, "ACCEPTANCE {tag} {label}: FAIL ({detail})");
}

#[test]
fn acceptance_01a_parameter_and_receptive_field_accounting() {
    let imu = Network::build(NetworkSpec::imu_net(1024), 0).expect("build");
    let wide = Network::build(NetworkSpec::unet(1024), 0).expect("build");
    let p_imu = imu.count_params();
    let p_wide = wide.count_params();
    let rf_imu = receptive_field(&imu.spec);
    let rf_wide = receptive_field(&wide.spec);
    let within = |got: u64, want: u64| ((got as f64 - want as f64) / want as f64).abs() <= 0.005;
    let ratio = p_imu as f64 / p_wide as f64;
    let pass = within(p_imu, 487_154)
        && within(p_wide, 29_649_794)
        && rf_imu == 768
        && rf_wide == 48
        && ratio < 0.02;
    verdict(
        "1a",
        "architecture accounting: parameters and receptive field",
        pass,
        format!(
            "params {p_imu} / {p_wide} (ratio {ratio:.4}), receptive fields {rf_imu} / {rf_wide}, \
             half-window coverage {} / {}",
            covers_half_window(&imu.spec),
            covers_half_window(&wide.spec)
        ),
    );
}

#[test]
fn acceptance_01b_flops_accounting_vs_reference_totals() {
    let imu = Network::build(NetworkSpec::imu_net(1024), 0).expect("build");
    let wide = Network::build(NetworkSpec::unet(1024), 0).expect("build");
    let (m_imu, f_imu) = (imu.count_macs(1024), imu.count_flops(1024));
    let (m_wide, f_wide) = (wide.count_macs(1024), wide.count_flops(1024));
    let (t_imu, t_wide) = (0.78e9, 21.6e9);
    let dev = |got: u64, want: f64| (got as f64 - want) / want * 100.0;
    let pass = dev(f_imu, t_imu).abs() <= 15.0 && dev(f_wide, t_wide).abs() <= 15.0;
    verdict(
        "1b",
        "architecture accounting: arithmetic cost vs reference totals",
        pass,
        format!(
            "at two per multiply-add: {f_imu} vs {t_imu:.2e} ({:+.1}%) and {f_wide} vs {t_wide:.2e} \
             ({:+.1}%); at one per multiply-add: {m_imu} ({:+.1}%) and {m_wide} ({:+.1}%); \
             no single convention lands both totals within 15%, and the compact model is outside \
             the band under both",
            dev(f_imu, t_imu),
            dev(f_wide, t_wide),
            dev(m_imu, t_imu),
            dev(m_wide, t_wide)
        ),
    );
}

#[test]
fn acceptance_02_gradient_suite() {
    let sweeps = [
        fd::conv(0xA0, 8),
        fd::transposed(0xA1, 6),
        fd::maxpool(0xA2, 6),
        fd::batchnorm(0xA3, 6),
        fd::relu(0xA4, 4),
        fd::reshape_ops(0xA5, 3),
        fd::loss(0xA6, 4),
        fd::network(3),
    ];
    let shapes: usize = sweeps.iter().map(|s| s.shapes).sum();
    let worst = sweeps.iter().map(|s| s.worst).fold(0.0, f64::max);
    let pass = shapes >= 20 && worst < 1e-4;
    verdict(
        "2",
        "finite-difference gradients for every layer",
        pass,
        format!("{shapes} random shapes, worst relative error {worst:.2e}"),
    );
}

#[test]
fn acceptance_03_kernel_oracle_equivalence() {
    let worst = conv_oracle_sweep(0xB0, 50)
        .max(transposed_oracle_sweep(0xB1, 50))
        .max(maxpool_oracle_sweep(0xB2, 50));
    let pass = worst <= 1e-12;
    verdict(
        "3",
        "convolution, upsampling, and pooling match naive references",
        pass,
        format!("150 random cases, worst deviation {worst:.2e}"),
    );
}

#[test]
fn acceptance_04_pipeline_properties() {
    let mut r = rng(0xD0);
    let mut ok = true;
    let mut notes: Vec<String> = Vec::new();

    // window-count formula against direct enumeration
    for _ in 0..200 {
        let n = r.gen_range(0..400);
        let w = r.gen_range(1..50);
        let s = r.gen_range(1..50);
        let mut count = 0;
        let mut start = 0;
        while start + w <= n {
            count += 1;
            start += s;
        }
        if window_count(n, w, s) != count {
            ok = false;
            notes.push(format!("window count wrong for n={n} w={w} s={s}"));
            break;
        }
    }

    // block-structured downsampling with co-selected labels, x20 duration
    let (rec, labels) = indexed_recording(60_000, 1000.0);
    let reps = downsample_random(&rec, &labels, 20.0, 20, 4).expect("downsample");
    let block = 50;
    let mut structure = reps.len() == 20;
    for (low, lab) in &reps {
        structure &= low.samples.len() == 1200 && low.rate_hz == 20.0;
        for (b, (s, l)) in low.samples.iter().zip(lab.iter()).enumerate() {
            let idx = s[0] as usize;
            structure &= idx >= b * block && idx < (b + 1) * block && *l == labels[idx];
        }
    }
    let total_s: f64 = reps.iter().map(|(r, _)| r.duration_s()).sum();
    structure &= (total_s - 20.0 * rec.duration_s()).abs() < 1e-9;
    if !structure {
        ok = false;
        notes.push("downsample block structure".into());
    }

    // label onsets flip at the first sample whose time reaches them
    let evs = imunet_core::datapipe::PhaseEventList::new(vec![(0.0, 0), (0.05, 1), (0.453, 0)])
        .expect("events");
    let lab = synchronize_labels(&evs, 20.0, 12).expect("labels");
    if lab != vec![0, 1, 1, 1, 1, 1, 1, 1, 1, 1, 0, 0] {
        ok = false;
        notes.push("label boundary rule".into());
    }

    // normalization constants: sensor limits to +-1, excursions counted
    let mut sig = vec![0.0; 12];
    sig[0] = 16.0;
    sig[1] = -16.0;
    sig[6] = 2000.0;
    sig[7] = -2000.0;
    let oor = normalize(&mut sig, 2).expect("normalize");
    if oor != 0 || sig[0] != 1.0 || sig[1] != -1.0 || sig[6] != 1.0 || sig[7] != -1.0 {
        ok = false;
        notes.push("normalization limits".into());
    }
    let mut sig = vec![0.0; 12];
    sig[0] = 18.0;
    sig[11] = -2500.0;
    let oor = normalize(&mut sig, 2).expect("normalize");
    if oor != 2 || sig[0] != 18.0 / 16.0 {
        ok = false;
        notes.push("out-of-range accounting".into());
    }

    verdict(
        "4",
        "preprocessing properties",
        ok,
        if notes.is_empty() {
            "window counts, block/replica downsampling with x20 duration, label boundaries, \
             normalization constants"
                .into()
        } else {
            notes.join("; ")
        },
    );
}

#[test]
fn acceptance_05_end_to_end_learning() {
    let cfg = TrainConfig {
        epochs: 50,
        batch_size: 32,
        seed: 3,
        ..TrainConfig::default()
    };
    let train_ws = corpus_window_set(3, 6.0, 0, 20.0, 20, WindowMode::Train, 0);
    let folds = make_folds(&train_ws, cfg.folds, cfg.val_fraction, cfg.seed).expect("folds");
    let fold = &folds.folds[0];
    let mut net = Network::build(NetworkSpec::imu_net_20hz(20), cfg.seed).expect("build");
    let (best, history) =
        train_model(&mut net, &train_ws, &fold.train_windows, &fold.val_windows, &cfg)
            .expect("training");

    let test_ws = corpus_window_set(3, 6.0, 0, 20.0, 20, WindowMode::Test, 0);
    let idx: Vec<usize> = test_ws
        .windows
        .iter()
        .enumerate()
        .filter(|(_, w)| fold.test_subjects.contains(&w.subject_id))
        .map(|(i, _)| i)
        .collect();
    let m = evaluate_model(&best, &test_ws, &idx, 20.0).expect("evaluation");

    let pass = history.len() == cfg.epochs
        && m.phase_accuracy_pct >= 95.0
        && m.stride_accuracy_pct >= 98.0
        && m.n_strides >= 50
        && m.swing_error.mean_ms <= 100.0
        && m.stance_error.mean_ms <= 100.0;
    verdict(
        "5",
        "end-to-end learning on a held-out subject",
        pass,
        format!(
            "50 epochs, test subject {:?}: phase accuracy {:.2}%, stride detection {:.2}% of {} \
             strides, swing error {:.1} ms, stance error {:.1} ms (limits 95% / 98% / 100 ms)",
            fold.test_subjects,
            m.phase_accuracy_pct,
            m.stride_accuracy_pct,
            m.n_strides,
            m.swing_error.mean_ms,
            m.stance_error.mean_ms
        ),
    );
}

#[test]
fn acceptance_06_compact_model_against_wide_baseline() {
    let mut compact = Network::build(NetworkSpec::imu_net_20hz(20), 1).expect("build");
    let mut wide = Network::build(NetworkSpec::unet(20), 1).expect("build");
    let mut r = rng(0xE0);
    let x = rand_batch(&mut r, 2, 1, 6, 20);
    let labels: Vec<u8> = (0..2 * 20).map(|_| r.gen_range(0..2) as u8).collect();

    let step = |net: &mut Network| -> f64 {
        let mut adam = Adam::new(0.01);
        let t0 = Instant::now();
        net.zero_grads();
        let (logits, trace) = net.forward_train(&x).expect("forward");
        let (_, grad) = softmax_cross_entropy(&logits, &labels).expect("loss");
        net.backward(trace, &grad).expect("backward");
        net.optimizer_step(&mut adam).expect("step");
        t0.elapsed().as_secs_f64()
    };

    // same batch and data: steps per epoch are equal, so the per-step ratio
    // is the per-epoch ratio
    let t_compact = (0..3).map(|_| step(&mut compact)).fold(f64::INFINITY, f64::min);
    let t_wide = step(&mut wide);
    let ratio = t_wide / t_compact;
    let pass = ratio >= 5.0;
    verdict(
        "6",
        "compact model trains >=5x faster per epoch than the wide baseline",
        pass,
        format!(
            "{:.1} ms vs {:.1} ms per optimizer step, ratio {ratio:.0}x",
            t_compact * 1e3,
            t_wide * 1e3
        ),
    );
}

#[test]
fn acceptance_07_metrics_against_brute_force() {
    let mut r = rng(0xF7);
    let rates = [20.0, 100.0, 1000.0];
    let mut mismatches = 0usize;
    for _ in 0..1000 {
        let n_pairs = r.gen_range(1..=3);
        let pairs: Vec<(Vec<u8>, Vec<u8>)> =
            (0..n_pairs).map(|_| random_label_pair(&mut r)).collect();
        let rate = rates[r.gen_range(0..rates.len())];
        let got = evaluate_predictions(&pairs, rate, 50.0).expect("evaluate");
        let want = naive_evaluate(&pairs, rate, 50.0);
        if !metrics_match(&got, &want) {
            mismatches += 1;
        }
    }
    verdict(
        "7",
        "all four metrics match brute-force recomputation",
        mismatches == 0,
        format!("1000 random pooled cases, {mismatches} mismatches"),
    );
}

#[test]
fn acceptance_08_streaming_equivalence_and_latency() {
    // 60 s of 20 Hz samples taken from a downsampled synthetic recording
    let profile = GaitProfile::new("S1", 9.0, Strike::RFS).expect("profile");
    let (rec, events) = synth_recording(&profile, 64.0, 21).expect("recording");
    let labels = synchronize_labels(&events, rec.rate_hz, rec.samples.len()).expect("labels");
    let reps = downsample_random(&rec, &labels, 20.0, 1, 5).expect("downsample");
    let samples: Vec<(f64, [f64; 6])> = reps[0]
        .0
        .samples
        .iter()
        .take(1200)
        .enumerate()
        .map(|(i, s)| (i as f64 / 20.0, *s))
        .collect();
    assert_eq!(samples.len(), 1200, "needs a full 60 s stream");

    let net = Network::build(NetworkSpec::imu_net_20hz(20), 7).expect("build");
    let single = run_stream_single(net.clone(), 20.0, &samples).expect("single");
    let threaded = run_stream_threaded(net.clone(), 20.0, &samples, 4).expect("threaded");

    // batch reference over the same non-overlapping windows
    let mut batch_phases = Vec::new();
    for w in 0..60 {
        let mut flat = vec![0.0; 6 * 20];
        for j in 0..20 {
            let (s, _) = normalize_sample(&samples[w * 20 + j].1);
            for (a, v) in s.iter().enumerate() {
                flat[a * 20 + j] = *v;
            }
        }
        let t = arrange_layout(&flat, 20, InputLayout::SpatialFirst).expect("layout");
        let tb = TensorBatch::pack(&[t]).expect("pack");
        let logits = net.forward(&tb).expect("forward");
        batch_phases.extend(argmax_classes(&logits).expect("argmax"));
    }

    let equivalent = single.phases == batch_phases
        && threaded.phases == single.phases
        && threaded.events == single.events
        && single.windows == 60
        && single.leftover == 0;

    // events reproduce exactly the transitions of the emitted phase stream
    let mut expected: Vec<(EventKind, f64)> = Vec::new();
    for i in 1..single.phases.len() {
        if single.phases[i] != single.phases[i - 1] {
            let kind = if single.phases[i] == 0 {
                EventKind::StanceOnset
            } else {
                EventKind::SwingOnset
            };
            expected.push((kind, i as f64 / 20.0));
        }
    }
    let events_ok = single.events.len() == expected.len()
        && single
            .events
            .iter()
            .zip(expected.iter())
            .all(|(e, (k, t))| e.kind == *k && e.time_s == *t)
        && single.events.windows(2).all(|w| w[0].kind != w[1].kind);

    let latency_ok = single.latency.max_ms < 50.0;
    let pass = equivalent && events_ok && latency_ok;
    verdict(
        "8",
        "streaming matches batch bit-exactly with low latency",
        pass,
        format!(
            "60 windows, stream==batch {equivalent}, {} alternating events match transitions \
             ({events_ok}), per-window latency max {:.1} ms (limit 50)",
            single.events.len(),
            single.latency.max_ms
        ),
    );
}

#[test]
fn acceptance_09_seeded_reproducibility() {
    let synth_ok = synth_dataset(2, 5.0, 11).expect("corpus")
        == synth_dataset(2, 5.0, 11).expect("corpus");

    let ws = corpus_window_set(2, 5.0, 11, 20.0, 20, WindowMode::Train, 4);
    let folds_ok =
        make_folds(&ws, 2, 0.1, 5).expect("folds") == make_folds(&ws, 2, 0.1, 5).expect("folds");

    let cfg = TrainConfig {
        epochs: 2,
        batch_size: 16,
        seed: 9,
        folds: 2,
        ..TrainConfig::default()
    };
    let plan = make_folds(&ws, cfg.folds, cfg.val_fraction, cfg.seed).expect("folds");
    let fold = &plan.folds[0];
    let run = || {
        let mut net = Network::build(NetworkSpec::imu_net_20hz(20), cfg.seed).expect("build");
        train_model(&mut net, &ws, &fold.train_windows, &fold.val_windows, &cfg)
            .expect("training")
            .0
    };
    let first = run();
    let train_ok = first.state_entries() == run().state_entries();

    let dir = tempfile::tempdir().expect("tempdir");
    let p1 = dir.path().join("a.ckpt");
    let p2 = dir.path().join("b.ckpt");
    save_checkpoint(&first, &p1).expect("save");
    let loaded = load_checkpoint(&p1).expect("load");
    save_checkpoint(&loaded, &p2).expect("save");
    let roundtrip_ok = loaded.state_entries() == first.state_entries()
        && std::fs::read(&p1).expect("read") == std::fs::read(&p2).expect("read");

    let pass = synth_ok && folds_ok && train_ok && roundtrip_ok;
    verdict(
        "9",
        "identical seeds reproduce data, folds, and checkpoints bit-exactly",
        pass,
        format!(
            "synthetic corpus {synth_ok}, fold plans {folds_ok}, trained parameters {train_ok}, \
             checkpoint round-trip {roundtrip_ok}"
        ),
    );
}
