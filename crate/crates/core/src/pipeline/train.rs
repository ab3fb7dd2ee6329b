use std::io::Write;
use std::path::{Path, PathBuf};

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{RunConfig, Task, VideoData};
use crate::autodiff::Tape;
use crate::data::{sample_class_windows, sample_detection_windows, WindowSample, NON_STROKE};
use crate::decision::argmax;
use crate::error::{Error, Result};
use crate::model::{save_checkpoint, TwoStreamNet};
use crate::optim::sgd_step;
use crate::tensor::{Element, Tensor};

pub const FINAL_CHECKPOINT: &str = "final.ckpt";
pub const BEST_CHECKPOINT: &str = "best.ckpt";
pub const TRAIN_LOG: &str = "train_log.jsonl";

/// A window of one video with its training label.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Sample {
    pub video: usize,
    pub window: WindowSample,
}

/// Stacks the stream windows of `samples` into one `N×3×T×H×W` tensor per
/// stream.
pub fn batch_tensors<F: Element>(videos: &[VideoData], samples: &[Sample]) -> Result<Vec<Tensor<F>>> {
    let streams = samples.first().map_or(0, |s| videos[s.video].streams.len());
    (0..streams)
        .map(|k| {
            let parts: Vec<Tensor<F>> = samples
                .iter()
                .map(|s| videos[s.video].streams[k].window(&s.window.frame_indices()))
                .collect();
            Tensor::stack(&parts)
        })
        .collect()
}

/// Training windows of one epoch, in a shuffled order.
pub fn epoch_samples(cfg: &RunConfig, videos: &[VideoData], train: &[usize], rng: &mut ChaCha8Rng) -> Result<Vec<Sample>> {
    let mut out = Vec::new();
    for &v in train {
        let video = &videos[v];
        let strokes = video.annotations.as_ref().map_or(&[][..], |a| &a.strokes[..]);
        let windows = match cfg.task {
            Task::Classify => sample_class_windows(strokes, cfg.window(), rng),
            Task::Detect => {
                // segments annotated as the non-stroke class are background
                let strokes: Vec<_> = strokes.iter().filter(|s| s.label != NON_STROKE).copied().collect();
                sample_detection_windows(video.frame_count, &strokes, cfg.window(), cfg.negative_ratio, rng)?
            }
        };
        out.extend(windows.into_iter().map(|window| Sample { video: v, window }));
    }
    out.shuffle(rng);
    Ok(out)
}

/// One line of the training log.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochLog {
    pub epoch: usize,
    pub loss: f64,
    pub train_accuracy: f64,
    pub val_loss: Option<f64>,
    pub val_accuracy: Option<f64>,
    /// Whether this epoch produced a new best checkpoint.
    pub best: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainReport {
    pub epochs: Vec<EpochLog>,
    pub final_checkpoint: PathBuf,
    pub best_checkpoint: PathBuf,
    pub log: PathBuf,
    pub train_videos: usize,
    pub validation_videos: usize,
}

/// Deterministic split of video indices into (train, validation).
pub fn split_videos(count: usize, fraction: f64, seed: u64) -> (Vec<usize>, Vec<usize>) {
    let mut idx: Vec<usize> = (0..count).collect();
    let held = ((count as f64) * fraction).floor() as usize;
    if held == 0 {
        return (idx, Vec::new());
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(u64::MAX);
    idx.shuffle(&mut rng);
    let mut val = idx.split_off(count - held);
    idx.sort_unstable();
    val.sort_unstable();
    (idx, val)
}

/// Mean loss and accuracy over `samples`, without gradients.
pub fn evaluate_samples(net: &TwoStreamNet<f32>, videos: &[VideoData], samples: &[Sample], batch: usize) -> Result<(f64, f64)> {
    let (mut loss, mut correct) = (0.0, 0usize);
    for chunk in samples.chunks(batch.max(1)) {
        let inputs = batch_tensors::<f32>(videos, chunk)?;
        let tape = Tape::new();
        let bound = net.bind_frozen(&tape);
        let out = net.forward(&bound, tape.constant(inputs[0].clone()), inputs.get(1).map(|t| tape.constant(t.clone())))?;
        let targets: Vec<usize> = chunk.iter().map(|s| s.window.label).collect();
        correct += count_correct(&out.value(), &targets);
        let l = out.cross_entropy(&targets)?;
        loss += l.value().item().unwrap_or(f32::NAN) as f64 * chunk.len() as f64;
    }
    let n = samples.len().max(1) as f64;
    Ok((loss / n, correct as f64 / n))
}

fn count_correct(probs: &Tensor<f32>, targets: &[usize]) -> usize {
    let k = probs.shape()[1];
    targets
        .iter()
        .enumerate()
        .filter(|&(r, &t)| {
            let row: Vec<f64> = probs.data()[r * k..(r + 1) * k].iter().map(|&v| v as f64).collect();
            argmax(&row) == t
        })
        .count()
}

/// Trains on in-memory videos, writing checkpoints and the log to `out_dir`.
/// `on_epoch` sees every log line as it is written.
pub fn train_videos(
    cfg: &RunConfig,
    videos: &[VideoData],
    out_dir: &Path,
    mut on_epoch: impl FnMut(&EpochLog),
) -> Result<TrainReport> {
    cfg.validate()?;
    if videos.is_empty() {
        return Err(Error::InvalidArgument("no training videos".into()));
    }
    let want = (cfg.model.input_size.height, cfg.model.input_size.width);
    for v in videos {
        if (v.height, v.width) != want {
            return Err(Error::config(
                "model.input_size",
                format!("video {} is {}×{} but the model expects {}×{}", v.name, v.width, v.height, want.1, want.0),
            ));
        }
        if v.streams.len() != cfg.streams.len() {
            return Err(Error::InvalidArgument(format!("video {} was loaded with the wrong streams", v.name)));
        }
    }
    std::fs::create_dir_all(out_dir).map_err(|e| Error::io(out_dir, e))?;
    let (train, val) = split_videos(videos.len(), cfg.validation_fraction, cfg.seed);
    let mut val_rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    val_rng.set_stream(u64::MAX - 1);
    let val_samples = if val.is_empty() {
        Vec::new()
    } else {
        epoch_samples(cfg, videos, &val, &mut val_rng)?
    };

    let mut net = TwoStreamNet::<f32>::init(&cfg.model, cfg.seed)?;
    let final_path = out_dir.join(FINAL_CHECKPOINT);
    let best_path = out_dir.join(BEST_CHECKPOINT);
    let log_path = out_dir.join(TRAIN_LOG);
    save_checkpoint(&net, &best_path)?;
    let mut log_file = std::fs::File::create(&log_path).map_err(|e| Error::io(&log_path, e))?;

    // higher is better: (accuracy, -loss)
    let mut best: Option<(f64, f64)> = None;
    let mut epochs = Vec::new();
    for epoch in 0..cfg.optimizer.epochs {
        let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
        rng.set_stream(epoch as u64 + 1);
        let samples = epoch_samples(cfg, videos, &train, &mut rng)?;
        if samples.is_empty() {
            return Err(Error::InvalidArgument("training videos contain no annotated strokes".into()));
        }
        let (mut loss_sum, mut correct) = (0.0, 0usize);
        for chunk in samples.chunks(cfg.batch_size) {
            let inputs = batch_tensors::<f32>(videos, chunk)?;
            let targets: Vec<usize> = chunk.iter().map(|s| s.window.label).collect();
            let tape = Tape::new();
            let bound = net.bind(&tape);
            let out = net.forward(&bound, tape.constant(inputs[0].clone()), inputs.get(1).map(|t| tape.constant(t.clone())))?;
            correct += count_correct(&out.value(), &targets);
            let loss = out.cross_entropy(&targets)?;
            let value = loss.value().item().unwrap_or(f32::NAN) as f64;
            if !value.is_finite() {
                return Err(Error::Diverged { epoch, loss: value });
            }
            loss_sum += value * chunk.len() as f64;
            net.zero_grad();
            tape.backward(loss)?;
            net.accumulate_grads(&tape, &bound)?;
            sgd_step(net.params_mut(), &cfg.optimizer);
            if net.params().iter().any(|p| p.value.data().iter().any(|w| !w.is_finite())) {
                return Err(Error::Diverged { epoch, loss: value });
            }
        }
        let n = samples.len() as f64;
        let (loss, train_accuracy) = (loss_sum / n, correct as f64 / n);
        let (val_loss, val_accuracy) = if val_samples.is_empty() {
            (None, None)
        } else {
            let (l, a) = evaluate_samples(&net, videos, &val_samples, cfg.batch_size)?;
            (Some(l), Some(a))
        };
        let score = match (val_accuracy, val_loss) {
            (Some(a), Some(l)) => (a, -l),
            _ => (train_accuracy, -loss),
        };
        let improved = best.is_none_or(|b| score > b);
        if improved {
            best = Some(score);
            save_checkpoint(&net, &best_path)?;
        }
        let entry = EpochLog {
            epoch,
            loss,
            train_accuracy,
            val_loss,
            val_accuracy,
            best: improved,
        };
        let line = serde_json::to_string(&entry)?;
        writeln!(log_file, "{line}").map_err(|e| Error::io(&log_path, e))?;
        on_epoch(&entry);
        epochs.push(entry);
        if cfg.stop_at_train_accuracy.is_some_and(|t| train_accuracy >= t) {
            break;
        }
    }
    log_file.flush().map_err(|e| Error::io(&log_path, e))?;
    save_checkpoint(&net, &final_path)?;
    Ok(TrainReport {
        epochs,
        final_checkpoint: final_path,
        best_checkpoint: best_path,
        log: log_path,
        train_videos: train.len(),
        validation_videos: val.len(),
    })
}
