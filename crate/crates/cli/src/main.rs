use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context};
use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Serialize;
use serde_json::{json, Value};

use strokenet::data::{load_frame_sequence, write_frame_dir, SyntheticSpec};
use strokenet::decision::{
    default_thresholds, load_label_records, load_segment_files, DecisionKind, DecisionMethod,
};
use strokenet::model::{load_checkpoint, TwoStreamNet};
use strokenet::pipeline::{
    classify_video, detect_video, evaluate_classification, evaluate_detection, load_dataset, load_video,
    train_videos, write_synthetic_dataset, Profile, RunConfig, Task, VideoData, MANIFEST_FILE,
};
use strokenet::pose::{compose_frame, parse_keypoint_stream, PoseFrame, RenderMode, SkeletonSpec};
use strokenet::Error;

#[derive(Parser)]
#[command(name = "strokenet", version, about = "Two-stream stroke classification and detection")]
struct Cli {
    /// Worker threads for the tensor kernels; results do not depend on it.
    #[arg(long, global = true)]
    threads: Option<usize>,

    /// Size preset supplying every config default.
    #[arg(long, global = true, value_enum, default_value_t = ProfileArg::Desk)]
    profile: ProfileArg,

    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, ValueEnum)]
enum ProfileArg {
    Desk,
    Paper,
}

impl From<ProfileArg> for Profile {
    fn from(p: ProfileArg) -> Self {
        match p {
            ProfileArg::Desk => Profile::Desk,
            ProfileArg::Paper => Profile::Paper,
        }
    }
}

#[derive(Subcommand)]
enum Command {
    /// Write a synthetic dataset: frames, keypoints, annotations, manifest.
    Synth(SynthArgs),
    /// Draw skeletons on black or over the source frames.
    Render(RenderArgs),
    /// Train a model from a run config.
    Train(TrainArgs),
    /// Label whole clips by aggregating window predictions.
    Classify(ClassifyArgs),
    /// Find stroke segments in long videos.
    Detect(DetectArgs),
    /// Score predictions against ground truth.
    Evaluate(EvaluateArgs),
}

#[derive(Args)]
struct SynthArgs {
    /// JSON synthetic-dataset spec; omitted fields take their defaults.
    #[arg(long)]
    spec: PathBuf,
    #[arg(long)]
    out: PathBuf,
    /// Overrides the spec's seed.
    #[arg(long)]
    seed: Option<u64>,
}

#[derive(Clone, Copy, ValueEnum)]
enum ModeArg {
    Black,
    Overlay,
}

#[derive(Args)]
struct RenderArgs {
    /// Directory of frame_%06d.png files, or a .tten frame tensor.
    #[arg(long)]
    frames: PathBuf,
    /// Keypoint stream, one JSON object per line.
    #[arg(long)]
    poses: PathBuf,
    #[arg(long, value_enum)]
    mode: ModeArg,
    #[arg(long)]
    out: PathBuf,
    /// JSON skeleton drawing spec; the COCO default otherwise.
    #[arg(long)]
    skeleton: Option<PathBuf>,
}

#[derive(Args)]
struct TrainArgs {
    #[arg(long)]
    config: PathBuf,
    /// Output directory; `run/` next to the config by default.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct InferArgs {
    #[arg(long)]
    config: PathBuf,
    #[arg(long)]
    checkpoint: PathBuf,
    /// no_window, mean, vote, vote_sliding or gaussian[:sigma].
    #[arg(long)]
    decision: Option<String>,
    /// Frames between sliding windows.
    #[arg(long)]
    stride: Option<usize>,
    /// Write the JSON result here instead of stdout.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct ClassifyArgs {
    #[command(flatten)]
    common: InferArgs,
    /// A video directory, or a dataset root to classify every video.
    #[arg(long)]
    clip: PathBuf,
}

#[derive(Args)]
struct DetectArgs {
    #[command(flatten)]
    common: InferArgs,
    /// A video directory, or a dataset root to process every video.
    #[arg(long)]
    video: PathBuf,
    /// Per-frame score a segment must exceed, in (0, 1).
    #[arg(long)]
    threshold: Option<f64>,
    /// Shortest segment kept, in frames.
    #[arg(long)]
    min_length: Option<usize>,
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum TaskArg {
    Classify,
    Detect,
}

#[derive(Args)]
struct EvaluateArgs {
    #[arg(long)]
    pred: PathBuf,
    #[arg(long)]
    gt: PathBuf,
    #[arg(long, value_enum)]
    task: TaskArg,
    /// Size of the confusion matrix; grown to fit the labels seen.
    #[arg(long, default_value_t = 0)]
    num_classes: usize,
    #[arg(long)]
    out: Option<PathBuf>,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(err) => {
            eprintln!("error: {err:#}");
            ExitCode::from(exit_code(&err))
        }
    }
}

/// 2 for missing or malformed input, 3 for a config/checkpoint mismatch, 4
/// for unpairable evaluation files, 5 for a diverged run, 1 otherwise.
fn exit_code(err: &anyhow::Error) -> u8 {
    for cause in err.chain() {
        if let Some(e) = cause.downcast_ref::<Error>() {
            return match e {
                Error::ConfigMismatch { .. } => 3,
                Error::Pairing(_) => 4,
                Error::Diverged { .. } => 5,
                Error::Io { .. }
                | Error::Parse { .. }
                | Error::Image { .. }
                | Error::Format(_)
                | Error::Json(_)
                | Error::Config { .. }
                | Error::InvalidArgument(_) => 2,
                Error::Shape { .. } => 1,
            };
        }
        if cause.is::<std::io::Error>() || cause.is::<serde_json::Error>() {
            return 2;
        }
    }
    1
}

fn run(cli: Cli) -> anyhow::Result<()> {
    if let Some(n) = cli.threads {
        if n == 0 {
            bail!(Error::InvalidArgument("--threads must be at least 1".into()));
        }
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .context("configuring the thread pool")?;
    }
    let profile = Profile::from(cli.profile);
    match cli.command {
        Command::Synth(a) => synth(a),
        Command::Render(a) => render(a),
        Command::Train(a) => train(a, profile),
        Command::Classify(a) => classify(a, profile),
        Command::Detect(a) => detect(a, profile),
        Command::Evaluate(a) => evaluate(a, profile),
    }
}

fn read_text(path: &Path) -> anyhow::Result<String> {
    std::fs::read_to_string(path).map_err(|e| Error::Io {
        path: path.to_path_buf(),
        source: e,
    }.into())
}

fn parse_json<T: serde::de::DeserializeOwned>(path: &Path) -> anyhow::Result<T> {
    let text = read_text(path)?;
    serde_json::from_str(&text).map_err(|e| {
        Error::Parse {
            path: path.to_path_buf(),
            line: e.line(),
            reason: e.to_string(),
        }
        .into()
    })
}

/// Pretty JSON to `out`, or to stdout.
fn emit(value: &impl Serialize, out: Option<&Path>) -> anyhow::Result<()> {
    let text = serde_json::to_string_pretty(value)? + "\n";
    match out {
        Some(path) => {
            if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
                std::fs::create_dir_all(parent).with_context(|| format!("creating {}", parent.display()))?;
            }
            std::fs::write(path, text).with_context(|| format!("writing {}", path.display()))?;
        }
        None => print!("{text}"),
    }
    Ok(())
}

fn synth(a: SynthArgs) -> anyhow::Result<()> {
    let mut spec: SyntheticSpec = parse_json(&a.spec)?;
    if let Some(seed) = a.seed {
        spec.seed = seed;
    }
    let manifest = write_synthetic_dataset(&spec, &a.out)?;
    emit(
        &json!({
            "root": a.out,
            "videos": manifest.videos.len(),
            "files": manifest.files.len(),
        }),
        None,
    )
}

fn render(a: RenderArgs) -> anyhow::Result<()> {
    let seq = load_frame_sequence(&a.frames)?;
    let mut poses = parse_keypoint_stream(&a.poses, None)?;
    let skeleton = match &a.skeleton {
        Some(p) => {
            let s: SkeletonSpec = parse_json(p)?;
            s.validate()?;
            s
        }
        None => SkeletonSpec::default(),
    };
    let n = seq.frame_count();
    if poses.is_empty() {
        poses = (0..n)
            .map(|frame_index| PoseFrame {
                frame_index,
                persons: Vec::new(),
            })
            .collect();
    } else if poses.len() != n {
        eprintln!(
            "warning: {} frames but keypoints for {}; rendering the first {}",
            n,
            poses.len(),
            n.min(poses.len())
        );
    }
    let mode = match a.mode {
        ModeArg::Black => RenderMode::Black,
        ModeArg::Overlay => RenderMode::Overlay,
    };
    let frames = seq
        .frames
        .iter()
        .zip(&poses)
        .map(|(base, pose)| compose_frame(mode, Some(base), (seq.width, seq.height), pose, &skeleton))
        .collect::<strokenet::Result<Vec<_>>>()?;
    let written = write_frame_dir(&frames, &a.out)?;
    emit(&json!({ "out": a.out, "frames": written.len() }), None)
}

/// Reads a run config; a relative dataset path is taken from the config's
/// directory.
fn load_config(path: &Path, profile: Profile) -> anyhow::Result<RunConfig> {
    let text = read_text(path)?;
    let mut cfg = RunConfig::from_json(&text, profile).with_context(|| format!("config {}", path.display()))?;
    if cfg.dataset.is_relative() {
        let base = path.parent().unwrap_or(Path::new(""));
        cfg.dataset = base.join(&cfg.dataset);
    }
    Ok(cfg)
}

fn train(a: TrainArgs, profile: Profile) -> anyhow::Result<()> {
    let cfg = load_config(&a.config, profile)?;
    let out = a
        .out
        .unwrap_or_else(|| a.config.parent().unwrap_or(Path::new("")).join("run"));
    // detection relabels every stroke, so any class id is accepted
    let num_classes = match cfg.task {
        Task::Classify => Some(cfg.model.num_classes),
        Task::Detect => None,
    };
    let videos = load_dataset(&cfg.dataset, cfg.videos.as_deref(), &cfg.streams, &cfg.skeleton, num_classes)?;
    let report = train_videos(&cfg, &videos, &out, |e| {
        eprintln!(
            "epoch {:>4}  loss {:.6}  train acc {:.4}{}",
            e.epoch,
            e.loss,
            e.train_accuracy,
            e.val_accuracy.map(|v| format!("  val acc {v:.4}")).unwrap_or_default()
        );
    })?;
    let last = report.epochs.last();
    emit(
        &json!({
            "epochs": report.epochs.len(),
            "final_loss": last.map(|e| e.loss),
            "final_train_accuracy": last.map(|e| e.train_accuracy),
            "train_videos": report.train_videos,
            "validation_videos": report.validation_videos,
            "final_checkpoint": report.final_checkpoint,
            "best_checkpoint": report.best_checkpoint,
            "log": report.log,
        }),
        None,
    )
}

struct Inference {
    cfg: RunConfig,
    net: TwoStreamNet<f32>,
    method: DecisionMethod,
}

fn prepare(a: &InferArgs, profile: Profile) -> anyhow::Result<Inference> {
    let cfg = load_config(&a.config, profile)?;
    let net = load_checkpoint::<f32>(&a.checkpoint, Some(&cfg.model))?;
    let mut method = cfg.decision;
    if let Some(d) = &a.decision {
        method.kind = DecisionKind::parse(d, cfg.default_sigma())?;
    }
    if let Some(s) = a.stride {
        method.stride = s;
    }
    method.validate()?;
    Ok(Inference { cfg, net, method })
}

/// Videos under `path`: every manifest video of a dataset root, or the one
/// video directory. The flag says whether a root was given.
fn load_targets(path: &Path, cfg: &RunConfig) -> anyhow::Result<(Vec<VideoData>, bool)> {
    if path.join(MANIFEST_FILE).is_file() {
        let videos = load_dataset(path, None, &cfg.streams, &cfg.skeleton, None)?;
        Ok((videos, true))
    } else {
        Ok((vec![load_video(path, &cfg.streams, &cfg.skeleton, None)?], false))
    }
}

fn one_or_all<T: Serialize>(items: Vec<T>, many: bool) -> Value {
    if many {
        serde_json::to_value(items).unwrap_or(Value::Null)
    } else {
        items.into_iter().next().map_or(Value::Null, |v| serde_json::to_value(v).unwrap_or(Value::Null))
    }
}

fn classify(a: ClassifyArgs, profile: Profile) -> anyhow::Result<()> {
    let inf = prepare(&a.common, profile)?;
    let (videos, many) = load_targets(&a.clip, &inf.cfg)?;
    let outputs = videos
        .iter()
        .map(|v| classify_video(&inf.net, v, &inf.method, inf.cfg.batch_size))
        .collect::<strokenet::Result<Vec<_>>>()?;
    emit(&one_or_all(outputs, many), a.common.out.as_deref())
}

fn detect(a: DetectArgs, profile: Profile) -> anyhow::Result<()> {
    let inf = prepare(&a.common, profile)?;
    let threshold = a.threshold.unwrap_or(inf.cfg.threshold);
    if !(threshold > 0.0 && threshold < 1.0) {
        bail!(Error::InvalidArgument(format!("--threshold must lie in (0, 1), got {threshold}")));
    }
    let min_length = a.min_length.unwrap_or(inf.cfg.min_length);
    let (videos, many) = load_targets(&a.video, &inf.cfg)?;
    let mut files = Vec::with_capacity(videos.len());
    for v in &videos {
        let out = detect_video(&inf.net, v, &inf.method, threshold, min_length, inf.cfg.batch_size)?;
        for w in &out.warnings {
            eprintln!("warning: {w}");
        }
        files.push(out.segments);
    }
    emit(&one_or_all(files, many), a.common.out.as_deref())
}

/// Full-scale published results, shown next to the computed metrics under
/// the paper profile; they are not reproduced by this run.
fn reference_numbers(task: TaskArg) -> Value {
    match task {
        TaskArg::Classify => json!({
            "note": "published full-scale results for comparison only",
            "two_stream_accuracy": 0.873,
            "baseline_accuracy": 0.864,
        }),
        TaskArg::Detect => json!({
            "note": "published full-scale results for comparison only",
            "two_stream": { "iou": 0.349, "map": 0.110 },
            "baseline": { "iou": 0.515, "map": 0.131 },
        }),
    }
}

fn evaluate(a: EvaluateArgs, profile: Profile) -> anyhow::Result<()> {
    let mut report = match a.task {
        TaskArg::Classify => {
            let preds = load_label_records(&a.pred)?;
            let gt = load_label_records(&a.gt)?;
            serde_json::to_value(evaluate_classification(&preds, &gt, a.num_classes)?)?
        }
        TaskArg::Detect => {
            let preds = load_segment_files(&a.pred)?;
            let gt = load_segment_files(&a.gt)?;
            serde_json::to_value(evaluate_detection(&preds, &gt, &default_thresholds())?)?
        }
    };
    if profile == Profile::Paper {
        report["reference"] = reference_numbers(a.task);
    }
    emit(&report, a.out.as_deref())
}
