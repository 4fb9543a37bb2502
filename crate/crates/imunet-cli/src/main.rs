//! Command-line frontend: synthetic dataset generation, preprocessing into
//! windowed containers, architecture inspection, training, evaluation, and
//! streaming inference.
//!
//! Exit codes: 0 success, 1 usage error, 2 data/format error, 3 numeric
//! failure.

use std::io::Read;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::error::ErrorKind;
use clap::{Args, Parser, Subcommand, ValueEnum};

use imunet_core::datapipe::files::{
    list_recordings, load_window_set, parse_imu_csv, read_recording, save_window_set,
    write_recording,
};
use imunet_core::datapipe::{
    downsample_random, merge_window_sets, normalize, segment_windows, synchronize_labels,
    WindowMode, NUM_AXES,
};
use imunet_core::metrics::GaitMetrics;
use imunet_core::model::{covers_half_window, receptive_field, InputLayout, Network, NetworkSpec};
use imunet_core::runtime::{
    load_checkpoint, run_stream_single, run_stream_threaded, save_checkpoint, StreamOutput,
};
use imunet_core::synth::{synth_dataset, DEFAULT_CONDITION_DURATION_S, DEFAULT_SUBJECTS};
use imunet_core::train::{history_to_csv, make_folds, train_model, TrainConfig};
use imunet_core::{Error, Result};

#[derive(Parser)]
#[command(
    name = "imunet",
    version,
    about = "Single-IMU gait phase segmentation: data synthesis, training, and streaming inference"
)]
struct Cli {
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Generate a labeled synthetic gait dataset (CSV files per recording)
    Synth(SynthArgs),
    /// Window, label, and normalize recordings into a binary dataset
    Preprocess(PreprocessArgs),
    /// Print parameter, FLOP, and receptive-field accounting for a model
    Inspect(InspectArgs),
    /// Train a model on a preprocessed dataset with subject-held-out folds
    Train(TrainArgs),
    /// Evaluate a checkpoint on a preprocessed dataset and report metrics
    Eval(EvalArgs),
    /// Run streaming inference over a sample stream, emitting gait events
    Stream(StreamArgs),
}

#[derive(Args)]
struct SynthArgs {
    /// Output directory for recording CSV/meta/label files
    #[arg(long)]
    out: PathBuf,
    /// Master seed for subject traits, gait jitter, and noise
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Recording duration per subject x speed x strike condition, seconds
    #[arg(long, default_value_t = DEFAULT_CONDITION_DURATION_S)]
    duration: f64,
    /// Number of subjects
    #[arg(long, default_value_t = DEFAULT_SUBJECTS)]
    subjects: usize,
}

#[derive(Args)]
struct PreprocessArgs {
    /// Directory of recordings produced by `synth` (or matching its format)
    #[arg(long = "in")]
    input: PathBuf,
    /// Output dataset file
    #[arg(long)]
    out: PathBuf,
    /// Sampling rate of the windowed dataset: 1000 keeps the source rate,
    /// 20 randomly downsamples each 50-sample block
    #[arg(long)]
    rate: u32,
    /// Input arrangement the windows are intended for
    #[arg(long, value_enum, default_value_t = LayoutArg::Spatial)]
    layout: LayoutArg,
    /// Random-downsampling replicas per recording (only meaningful at 20 Hz)
    #[arg(long = "downsample-replicas", default_value_t = 1)]
    replicas: usize,
    /// Train mode uses half-window stride; test mode uses non-overlapping windows
    #[arg(long, value_enum, default_value_t = ModeArg::Train)]
    mode: ModeArg,
    /// Seed for the random downsampler
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Window length in samples (defaults to one second at the chosen rate)
    #[arg(long = "window-len")]
    window_len: Option<usize>,
}

#[derive(Args)]
struct InspectArgs {
    /// Architecture to build
    #[arg(long, value_enum)]
    model: ModelArg,
    /// Input rate the model targets (1000 or 20)
    #[arg(long, default_value_t = 1000)]
    rate: u32,
    /// Input arrangement
    #[arg(long, value_enum, default_value_t = LayoutArg::Spatial)]
    layout: LayoutArg,
}

#[derive(Args)]
struct TrainArgs {
    /// Preprocessed dataset file (train-mode windows)
    #[arg(long)]
    data: PathBuf,
    /// Architecture to train
    #[arg(long, value_enum, default_value_t = ModelArg::Imunet)]
    model: ModelArg,
    /// Flat key=value config file; defaults apply when omitted
    #[arg(long)]
    config: Option<PathBuf>,
    /// Fold index to train (subject-held-out cross validation)
    #[arg(long, default_value_t = 0)]
    fold: usize,
    /// Output checkpoint path; `<out>.history.csv` records the loss curve
    #[arg(long)]
    out: PathBuf,
    /// Override config epochs
    #[arg(long)]
    epochs: Option<usize>,
    /// Override config batch_size
    #[arg(long = "batch-size")]
    batch_size: Option<usize>,
    /// Override config learning_rate
    #[arg(long = "learning-rate")]
    learning_rate: Option<f64>,
    /// Override config val_fraction
    #[arg(long = "val-fraction")]
    val_fraction: Option<f64>,
    /// Override config folds
    #[arg(long)]
    folds: Option<usize>,
    /// Override config seed
    #[arg(long)]
    seed: Option<u64>,
}

#[derive(Args)]
struct EvalArgs {
    /// Checkpoint to evaluate
    #[arg(long)]
    ckpt: PathBuf,
    /// Preprocessed dataset file (test-mode windows)
    #[arg(long)]
    data: PathBuf,
    /// Where to write the metric CSV report
    #[arg(long)]
    report: PathBuf,
}

#[derive(Args)]
struct StreamArgs {
    /// Checkpoint to run (20 Hz pool-factor-2 model)
    #[arg(long)]
    ckpt: PathBuf,
    /// Input sample CSV (`t,ax,ay,az,gx,gy,gz`), or `-` for stdin
    #[arg(long = "in")]
    input: String,
    /// Where to write detected events as `t,kind`
    #[arg(long = "events-out")]
    events_out: PathBuf,
    /// Where to write per-window inference latency as `window,ms`
    #[arg(long = "latency-out")]
    latency_out: PathBuf,
    /// Stream sample rate in Hz
    #[arg(long, default_value_t = 20.0)]
    rate: f64,
    /// Run ingestion and inference as a two-stage pipeline
    #[arg(long, default_value_t = false)]
    threaded: bool,
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum ModelArg {
    Imunet,
    Unet,
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum LayoutArg {
    Spatial,
    Temporal,
}

impl From<LayoutArg> for InputLayout {
    fn from(v: LayoutArg) -> InputLayout {
        match v {
            LayoutArg::Spatial => InputLayout::SpatialFirst,
            LayoutArg::Temporal => InputLayout::TemporalFirst,
        }
    }
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum ModeArg {
    Train,
    Test,
}

fn exit_code_for(err: &Error) -> u8 {
    match err {
        Error::InvalidArgument(_) => 1,
        Error::Numeric(_) => 3,
        _ => 2,
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = match e.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => 0,
                _ => 1,
            };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    let result = match cli.cmd {
        Cmd::Synth(args) => cmd_synth(args),
        Cmd::Preprocess(args) => cmd_preprocess(args),
        Cmd::Inspect(args) => cmd_inspect(args),
        Cmd::Train(args) => cmd_train(args),
        Cmd::Eval(args) => cmd_eval(args),
        Cmd::Stream(args) => cmd_stream(args),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_code_for(&e))
        }
    }
}

fn cmd_synth(args: SynthArgs) -> Result<()> {
    std::fs::create_dir_all(&args.out)
        .map_err(|e| Error::io(args.out.display().to_string(), e))?;
    let dataset = synth_dataset(args.subjects, args.duration, args.seed)?;
    let mut total_s = 0.0;
    for (rec, events) in &dataset {
        write_recording(&args.out, rec, events)?;
        total_s += rec.duration_s();
    }
    println!(
        "wrote {} recordings ({:.1} s total) to {}",
        dataset.len(),
        total_s,
        args.out.display()
    );
    Ok(())
}

fn cmd_preprocess(args: PreprocessArgs) -> Result<()> {
    if args.rate != 1000 && args.rate != 20 {
        return Err(Error::InvalidArgument(format!(
            "--rate must be 1000 or 20, got {}",
            args.rate
        )));
    }
    if args.replicas == 0 {
        return Err(Error::InvalidArgument("--downsample-replicas must be >= 1".into()));
    }
    let window_len = args.window_len.unwrap_or(args.rate as usize);
    let mode = match args.mode {
        ModeArg::Train => WindowMode::Train,
        ModeArg::Test => WindowMode::Test,
    };

    let ids = list_recordings(&args.input)?;
    if ids.is_empty() {
        return Err(Error::Empty("no recordings found in input directory"));
    }
    let mut sets = Vec::new();
    let mut out_of_range = 0usize;
    for (i, id) in ids.iter().enumerate() {
        let (rec, events) = read_recording(&args.input, id)?;
        let labels = synchronize_labels(&events, rec.rate_hz, rec.samples.len())?;
        let variants: Vec<(imunet_core::datapipe::ImuRecording, Vec<u8>, Option<usize>)> =
            if args.rate == 20 && rec.rate_hz != 20.0 {
                downsample_random(
                    &rec,
                    &labels,
                    20.0,
                    args.replicas,
                    args.seed.wrapping_add(i as u64),
                )?
                .into_iter()
                .enumerate()
                .map(|(j, (r, l))| (r, l, Some(j)))
                .collect()
            } else {
                vec![(rec, labels, None)]
            };
        for (rec_v, labels_v, replica) in &variants {
            let mut ws = segment_windows(rec_v, labels_v, window_len, mode)?;
            for w in &mut ws.windows {
                out_of_range += normalize(&mut w.signal, window_len)?;
                if let Some(j) = replica {
                    w.rec_id = format!("{}_r{}", w.rec_id, j);
                }
            }
            sets.push(ws);
        }
    }
    let merged = merge_window_sets(sets)?;
    let n = merged.windows.len();
    let seconds = n as f64 * window_len as f64 / merged.rate_hz;
    save_window_set(&args.out, &merged, args.layout.into())?;
    println!(
        "wrote {} windows of {} samples at {} Hz ({:.1} windowed seconds, {} out-of-range values) to {}",
        n,
        window_len,
        merged.rate_hz,
        seconds,
        out_of_range,
        args.out.display()
    );
    Ok(())
}

fn spec_for(model: ModelArg, rate: u32, window_len: usize, layout: InputLayout) -> Result<NetworkSpec> {
    if rate != 1000 && rate != 20 {
        return Err(Error::InvalidArgument(format!(
            "--rate must be 1000 or 20, got {rate}"
        )));
    }
    let mut spec = match (model, rate) {
        (ModelArg::Imunet, 1000) => NetworkSpec::imu_net(window_len),
        (ModelArg::Imunet, _) => NetworkSpec::imu_net_20hz(window_len),
        (ModelArg::Unet, _) => NetworkSpec::unet(window_len),
    };
    spec.layout = layout;
    spec.validate()?;
    Ok(spec)
}

fn cmd_inspect(args: InspectArgs) -> Result<()> {
    let window_len = args.rate as usize;
    let spec = spec_for(args.model, args.rate, window_len, args.layout.into())?;
    let net = Network::build(spec.clone(), 0)?;
    let params = net.count_params();
    let macs = net.count_macs(window_len);
    let flops = net.count_flops(window_len);
    let rf = receptive_field(&spec);

    println!("model: {}", match args.model {
        ModelArg::Imunet => "imunet",
        ModelArg::Unet => "unet",
    });
    println!("layout: {}", spec.layout.as_str());
    println!("window: {} samples at {} Hz", window_len, args.rate);
    println!("pool factor: {} x {} stages", spec.pool_k, 4);
    println!("parameters: {params}");
    println!("macs per window: {macs}");
    println!("flops per window: {flops} ({:.4} G, two per multiply-add)", flops as f64 / 1e9);
    println!("receptive field: {rf} samples");
    println!(
        "receptive field covers half a window: {}",
        if covers_half_window(&spec) { "yes" } else { "no" }
    );
    Ok(())
}

fn apply_overrides(cfg: &mut TrainConfig, args: &TrainArgs) {
    if let Some(v) = args.epochs {
        cfg.epochs = v;
    }
    if let Some(v) = args.batch_size {
        cfg.batch_size = v;
    }
    if let Some(v) = args.learning_rate {
        cfg.learning_rate = v;
    }
    if let Some(v) = args.val_fraction {
        cfg.val_fraction = v;
    }
    if let Some(v) = args.folds {
        cfg.folds = v;
    }
    if let Some(v) = args.seed {
        cfg.seed = v;
    }
}

fn print_metrics(m: &GaitMetrics) {
    println!("gait phase accuracy:      {:.2} %", m.phase_accuracy_pct);
    println!("stride detection accuracy: {:.2} % ({} strides)", m.stride_accuracy_pct, m.n_strides);
    println!(
        "swing time error:          {:.2} +/- {:.2} ms over {} segments",
        m.swing_error.mean_ms, m.swing_error.std_ms, m.swing_error.n
    );
    println!(
        "stance time error:         {:.2} +/- {:.2} ms over {} segments",
        m.stance_error.mean_ms, m.stance_error.std_ms, m.stance_error.n
    );
}

fn metrics_csv(m: &GaitMetrics) -> String {
    let mut out = String::from("metric,value\n");
    out.push_str(&format!("gait_phase_accuracy_pct,{}\n", m.phase_accuracy_pct));
    out.push_str(&format!("stride_detection_accuracy_pct,{}\n", m.stride_accuracy_pct));
    out.push_str(&format!("strides_total,{}\n", m.n_strides));
    out.push_str(&format!("swing_time_error_mean_ms,{}\n", m.swing_error.mean_ms));
    out.push_str(&format!("swing_time_error_std_ms,{}\n", m.swing_error.std_ms));
    out.push_str(&format!("swing_segments,{}\n", m.swing_error.n));
    out.push_str(&format!("stance_time_error_mean_ms,{}\n", m.stance_error.mean_ms));
    out.push_str(&format!("stance_time_error_std_ms,{}\n", m.stance_error.std_ms));
    out.push_str(&format!("stance_segments,{}\n", m.stance_error.n));
    out
}

fn cmd_train(args: TrainArgs) -> Result<()> {
    let mut cfg = match &args.config {
        Some(path) => {
            let text = std::fs::read_to_string(path)
                .map_err(|e| Error::io(path.display().to_string(), e))?;
            TrainConfig::from_kv_text(&text)?
        }
        None => TrainConfig::default(),
    };
    apply_overrides(&mut cfg, &args);
    cfg.validate()?;

    let (ws, layout) = load_window_set(&args.data)?;
    let rate = ws.rate_hz.round() as u32;
    let spec = spec_for(args.model, rate, ws.window_len, layout)?;

    let plan = make_folds(&ws, cfg.folds, cfg.val_fraction, cfg.seed)?;
    let fold = plan.folds.get(args.fold).ok_or_else(|| {
        Error::InvalidArgument(format!(
            "--fold {} out of range: plan has {} folds",
            args.fold,
            plan.folds.len()
        ))
    })?;
    println!(
        "fold {}: train subjects {:?}, test subjects {:?} ({} train / {} val / {} test windows)",
        args.fold,
        fold.train_subjects,
        fold.test_subjects,
        fold.train_windows.len(),
        fold.val_windows.len(),
        fold.test_windows.len()
    );

    let mut net = Network::build(spec, cfg.seed)?;
    println!(
        "training {} parameters for {} epochs, batch {}, lr {}",
        net.count_params(),
        cfg.epochs,
        cfg.batch_size,
        cfg.learning_rate
    );
    let (best, history) = train_model(&mut net, &ws, &fold.train_windows, &fold.val_windows, &cfg)?;
    save_checkpoint(&best, &args.out)?;
    let history_path = PathBuf::from(format!("{}.history.csv", args.out.display()));
    std::fs::write(&history_path, history_to_csv(&history))
        .map_err(|e| Error::io(history_path.display().to_string(), e))?;

    let best_val = history.iter().map(|r| r.val_loss).fold(f64::INFINITY, f64::min);
    println!(
        "best validation loss {:.6} (final epoch {:.6}); checkpoint: {}",
        best_val,
        history.last().map(|r| r.val_loss).unwrap_or(f64::NAN),
        args.out.display()
    );

    if !fold.test_windows.is_empty() {
        let m = imunet_core::train::evaluate_model(&best, &ws, &fold.test_windows, ws.rate_hz)?;
        println!("held-out subject metrics:");
        print_metrics(&m);
    }
    Ok(())
}

fn cmd_eval(args: EvalArgs) -> Result<()> {
    let net = load_checkpoint(&args.ckpt)?;
    let (ws, _layout) = load_window_set(&args.data)?;
    if ws.window_len != net.spec.window_len {
        return Err(Error::Shape(format!(
            "dataset windows are {} samples, checkpoint expects {}",
            ws.window_len, net.spec.window_len
        )));
    }
    if ws.stride != ws.window_len {
        println!(
            "note: dataset stride {} != window length {}; evaluation assumes \
             non-overlapping test windows",
            ws.stride, ws.window_len
        );
    }
    let indices: Vec<usize> = (0..ws.windows.len()).collect();
    let m = imunet_core::train::evaluate_model(&net, &ws, &indices, ws.rate_hz)?;
    print_metrics(&m);
    std::fs::write(&args.report, metrics_csv(&m))
        .map_err(|e| Error::io(args.report.display().to_string(), e))?;
    println!("report written to {}", args.report.display());
    Ok(())
}

fn read_stream_samples(input: &str) -> Result<Vec<(f64, [f64; NUM_AXES])>> {
    if input == "-" {
        let mut text = String::new();
        std::io::stdin()
            .read_to_string(&mut text)
            .map_err(|e| Error::io("<stdin>", e))?;
        parse_imu_csv(&text, Path::new("<stdin>"))
    } else {
        let path = Path::new(input);
        let text =
            std::fs::read_to_string(path).map_err(|e| Error::io(path.display().to_string(), e))?;
        parse_imu_csv(&text, path)
    }
}

fn cmd_stream(args: StreamArgs) -> Result<()> {
    let net = load_checkpoint(&args.ckpt)?;
    let samples = read_stream_samples(&args.input)?;
    let out: StreamOutput = if args.threaded {
        run_stream_threaded(net, args.rate, &samples, 4)?
    } else {
        run_stream_single(net, args.rate, &samples)?
    };

    let mut events_csv = String::from("t,kind\n");
    for e in &out.events {
        events_csv.push_str(&format!("{},{}\n", e.time_s, e.kind.as_str()));
    }
    std::fs::write(&args.events_out, events_csv)
        .map_err(|e| Error::io(args.events_out.display().to_string(), e))?;

    let mut latency_csv = String::from("window,ms\n");
    for (i, ms) in out.latencies_ms.iter().enumerate() {
        latency_csv.push_str(&format!("{i},{ms}\n"));
    }
    std::fs::write(&args.latency_out, latency_csv)
        .map_err(|e| Error::io(args.latency_out.display().to_string(), e))?;

    println!(
        "{} windows, {} events, {} leftover samples, {} out-of-range values",
        out.windows,
        out.events.len(),
        out.leftover,
        out.out_of_range
    );
    if out.latency.count > 0 {
        println!(
            "latency per window: min {:.2} ms, mean {:.2} ms, max {:.2} ms",
            out.latency.min_ms,
            out.latency.mean_ms(),
            out.latency.max_ms
        );
    }
    println!("events written to {}", args.events_out.display());
    println!("latency written to {}", args.latency_out.display());
    Ok(())
}
