use serde::{Deserialize, Serialize};

use super::train::{batch_tensors, Sample};
use super::VideoData;
use crate::data::{sliding_windows, WindowSample, NON_STROKE, STROKE};
use crate::decision::{
    aggregate_clip, classification_metrics, detection_metrics, extract_segments, frame_curve, pair_by_video,
    ClassificationMetrics, DecisionKind, DecisionMethod, DetectionMetrics, LabelRecord, Segment, SegmentFile, VideoSegments,
    WindowPrediction,
};
use crate::error::{Error, Result};
use crate::model::TwoStreamNet;

/// Runs the network on `windows` of `video`, `batch` windows at a time.
pub fn window_predictions(
    net: &TwoStreamNet<f32>,
    video: &VideoData,
    windows: &[WindowSample],
    batch: usize,
) -> Result<Vec<WindowPrediction>> {
    let videos = std::slice::from_ref(video);
    let mut out = Vec::with_capacity(windows.len());
    for chunk in windows.chunks(batch.max(1)) {
        let samples: Vec<Sample> = chunk.iter().map(|&window| Sample { video: 0, window }).collect();
        let inputs = batch_tensors::<f32>(videos, &samples)?;
        let probs = net.predict(&inputs[0], inputs.get(1))?;
        let k = probs.shape()[1];
        for (i, w) in chunk.iter().enumerate() {
            let row: Vec<f64> = probs.data()[i * k..(i + 1) * k].iter().map(|&p| p as f64).collect();
            // renormalize in f64 so every row is a distribution to 1e-15
            let total: f64 = row.iter().sum();
            out.push(WindowPrediction {
                start: w.start,
                length: w.span,
                probs: row.into_iter().map(|p| p / total).collect(),
            });
        }
    }
    Ok(out)
}

/// Windows for classifying a whole clip: full windows at `stride`, or one
/// edge-padded window when the clip is shorter than `length`.
pub fn clip_windows(frame_count: usize, length: usize, stride: usize) -> Vec<WindowSample> {
    if frame_count == 0 {
        return Vec::new();
    }
    if frame_count < length {
        return vec![WindowSample {
            start: 0,
            span: frame_count,
            length,
            label: 0,
        }];
    }
    sliding_windows(frame_count, length, stride)
        .into_iter()
        .map(|start| WindowSample {
            start,
            span: length,
            length,
            label: 0,
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassifyOutput {
    pub video: String,
    pub label: usize,
    pub probs: Vec<f64>,
    pub method: DecisionKind,
    pub windows: usize,
}

/// Labels a clip by aggregating its windows. The reference point is the
/// midpoint of the clip's single annotated stroke, or of the clip.
pub fn classify_video(net: &TwoStreamNet<f32>, video: &VideoData, method: &DecisionMethod, batch: usize) -> Result<ClassifyOutput> {
    let length = net.config().input_size.frames;
    let windows = clip_windows(video.frame_count, length, method.stride);
    let preds = window_predictions(net, video, &windows, batch)?;
    let midpoint = match video.annotations.as_ref().map(|a| &a.strokes[..]) {
        Some([s]) => (s.begin + s.end) as f64 / 2.0,
        _ => video.frame_count as f64 / 2.0,
    };
    let d = aggregate_clip(&preds, method.kind, midpoint)?;
    Ok(ClassifyOutput {
        video: video.name.clone(),
        label: d.label,
        probs: d.probs,
        method: method.kind,
        windows: preds.len(),
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct DetectOutput {
    pub segments: SegmentFile,
    /// Per-frame stroke score the segments were cut from.
    pub curve: Vec<f64>,
    pub warnings: Vec<String>,
}

/// Sliding-window detection: windows at the method's stride, a per-frame
/// curve, then thresholded runs of at least `min_length` frames.
pub fn detect_video(
    net: &TwoStreamNet<f32>,
    video: &VideoData,
    method: &DecisionMethod,
    threshold: f64,
    min_length: usize,
    batch: usize,
) -> Result<DetectOutput> {
    method.validate()?;
    let length = net.config().input_size.frames;
    let mut warnings = Vec::new();
    let starts = sliding_windows(video.frame_count, length, method.stride);
    if starts.is_empty() {
        warnings.push(format!(
            "video {} has {} frames, fewer than the {length}-frame window; no segments",
            video.name, video.frame_count
        ));
    }
    let windows: Vec<WindowSample> = starts
        .into_iter()
        .map(|start| WindowSample {
            start,
            span: length,
            length,
            label: 0,
        })
        .collect();
    let preds = window_predictions(net, video, &windows, batch)?;
    let curve = frame_curve(&preds, video.frame_count, method.kind);
    let segments = extract_segments(&curve, threshold, min_length)?;
    Ok(DetectOutput {
        segments: SegmentFile {
            video: video.name.clone(),
            segments,
        },
        curve,
        warnings,
    })
}

/// Detection metrics of predicted against ground-truth segment files,
/// paired by video name. Detection is class-agnostic: segments of any
/// stroke class count as strokes and non-stroke segments are ignored.
pub fn evaluate_detection(preds: &[SegmentFile], gt: &[SegmentFile], thresholds: &[f64]) -> Result<DetectionMetrics> {
    let pairs = pair_by_video(preds, gt, |p| &p.video, |g| &g.video)?;
    let strokes = |segs: &[Segment]| -> Vec<Segment> {
        segs.iter()
            .filter(|s| s.label != NON_STROKE)
            .map(|s| Segment { label: STROKE, ..*s })
            .collect()
    };
    let videos: Vec<VideoSegments> = pairs
        .into_iter()
        .map(|(p, g)| VideoSegments {
            predictions: strokes(&p.segments),
            ground_truth: strokes(&g.segments),
        })
        .collect();
    Ok(detection_metrics(&videos, thresholds))
}

pub fn evaluate_classification(preds: &[LabelRecord], gt: &[LabelRecord], num_classes: usize) -> Result<ClassificationMetrics> {
    let pairs = pair_by_video(preds, gt, |p| &p.video, |g| &g.video)?;
    let (p, t): (Vec<usize>, Vec<usize>) = pairs.into_iter().map(|(p, g)| (p.label, g.label)).unzip();
    if t.is_empty() {
        return Err(Error::Pairing("no videos to evaluate".into()));
    }
    classification_metrics(&p, &t, num_classes)
}
