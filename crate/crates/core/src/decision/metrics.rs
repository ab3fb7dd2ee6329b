use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};

use crate::data::STROKE;
use crate::error::{Error, Result};

/// A scored half-open frame interval `[begin, end)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Segment {
    pub begin: usize,
    pub end: usize,
    pub label: usize,
    #[serde(default = "one")]
    pub score: f64,
}

fn one() -> f64 {
    1.0
}

impl Segment {
    pub fn new(begin: usize, end: usize, label: usize, score: f64) -> Result<Self> {
        let s = Segment { begin, end, label, score };
        s.validate()?;
        Ok(s)
    }

    pub fn validate(&self) -> Result<()> {
        if self.begin >= self.end {
            return Err(Error::InvalidArgument(format!(
                "segment [{}, {}) is empty",
                self.begin, self.end
            )));
        }
        if !(0.0..=1.0).contains(&self.score) {
            return Err(Error::InvalidArgument(format!("segment score {} outside [0, 1]", self.score)));
        }
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.end - self.begin
    }

    pub fn is_empty(&self) -> bool {
        self.end <= self.begin
    }
}

/// Maximal runs with `curve[t] >= threshold` lasting at least `min_length`
/// frames, labelled as strokes and scored by their mean curve value.
pub fn extract_segments(curve: &[f64], threshold: f64, min_length: usize) -> Result<Vec<Segment>> {
    if !(threshold > 0.0 && threshold < 1.0) {
        return Err(Error::config("threshold", format!("must lie in (0, 1), got {threshold}")));
    }
    if min_length == 0 {
        return Err(Error::config("min_length", "must be at least 1"));
    }
    let mut out = Vec::new();
    let mut t = 0;
    while t < curve.len() {
        if curve[t] < threshold {
            t += 1;
            continue;
        }
        let begin = t;
        while t < curve.len() && curve[t] >= threshold {
            t += 1;
        }
        if t - begin >= min_length {
            let mean = curve[begin..t].iter().sum::<f64>() / (t - begin) as f64;
            out.push(Segment {
                begin,
                end: t,
                label: STROKE,
                score: mean.clamp(0.0, 1.0),
            });
        }
    }
    Ok(out)
}

/// Intersection over union of two frame intervals.
pub fn temporal_iou(a: &Segment, b: &Segment) -> f64 {
    let inter = a.end.min(b.end).saturating_sub(a.begin.max(b.begin));
    let union = a.len() + b.len() - inter;
    if union == 0 {
        return 0.0;
    }
    inter as f64 / union as f64
}

/// Predictions and ground truth of one video.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct VideoSegments {
    pub predictions: Vec<Segment>,
    pub ground_truth: Vec<Segment>,
}

/// Outcome of greedy matching at one IoU threshold.
#[derive(Debug, Clone, PartialEq)]
pub struct Matching {
    /// `(video, prediction index)` in descending score order, with the
    /// matched ground-truth index and IoU.
    pub ranked: Vec<((usize, usize), Option<(usize, f64)>)>,
    pub num_ground_truth: usize,
}

/// Greedy matching: predictions in descending score order (ties by
/// earlier begin, then input order) each take the unmatched ground-truth
/// segment of their video with the highest IoU at or above `threshold`.
pub fn match_segments(videos: &[VideoSegments], threshold: f64) -> Matching {
    let mut order: Vec<(usize, usize)> = videos
        .iter()
        .enumerate()
        .flat_map(|(v, s)| (0..s.predictions.len()).map(move |i| (v, i)))
        .collect();
    order.sort_by(|&(va, a), &(vb, b)| {
        let (pa, pb) = (&videos[va].predictions[a], &videos[vb].predictions[b]);
        pb.score.total_cmp(&pa.score).then(pa.begin.cmp(&pb.begin))
    });
    let mut used: Vec<Vec<bool>> = videos.iter().map(|v| vec![false; v.ground_truth.len()]).collect();
    let ranked = order
        .into_iter()
        .map(|(v, i)| {
            let p = &videos[v].predictions[i];
            let mut best: Option<(usize, f64)> = None;
            for (j, g) in videos[v].ground_truth.iter().enumerate() {
                if used[v][j] {
                    continue;
                }
                let iou = temporal_iou(p, g);
                if iou >= threshold && best.is_none_or(|(_, b)| iou > b) {
                    best = Some((j, iou));
                }
            }
            if let Some((j, _)) = best {
                used[v][j] = true;
            }
            ((v, i), best)
        })
        .collect();
    Matching {
        ranked,
        num_ground_truth: videos.iter().map(|v| v.ground_truth.len()).sum(),
    }
}

/// Area under the precision-recall curve with the precision envelope
/// (precision at recall r is the best precision at any recall ≥ r).
///
/// Recall only moves at hits, by `1/num_ground_truth`, so the area is the
/// sum of enveloped precisions at the hits divided once at the end.
pub fn interpolated_ap(hits: &[bool], num_ground_truth: usize) -> f64 {
    if num_ground_truth == 0 {
        return if hits.is_empty() { 1.0 } else { 0.0 };
    }
    let mut tp = 0usize;
    let precision: Vec<f64> = hits
        .iter()
        .enumerate()
        .map(|(rank, &hit)| {
            tp += usize::from(hit);
            tp as f64 / (rank + 1) as f64
        })
        .collect();
    let mut envelope = vec![0.0f64; hits.len()];
    let mut best = 0.0f64;
    for k in (0..hits.len()).rev() {
        best = best.max(precision[k]);
        envelope[k] = best;
    }
    let total: f64 = (0..hits.len()).filter(|&k| hits[k]).map(|k| envelope[k]).sum();
    total / num_ground_truth as f64
}

/// AP of one class over several videos at one IoU threshold.
pub fn average_precision_videos(videos: &[VideoSegments], threshold: f64) -> f64 {
    let m = match_segments(videos, threshold);
    let hits: Vec<bool> = m.ranked.iter().map(|(_, g)| g.is_some()).collect();
    interpolated_ap(&hits, m.num_ground_truth)
}

/// AP of `preds` against `gt` (single video, single class).
pub fn average_precision(preds: &[Segment], gt: &[Segment], threshold: f64) -> f64 {
    average_precision_videos(
        &[VideoSegments {
            predictions: preds.to_vec(),
            ground_truth: gt.to_vec(),
        }],
        threshold,
    )
}

/// IoU thresholds 0.50, 0.55, …, 0.95.
pub fn default_thresholds() -> Vec<f64> {
    (0..10).map(|i| (50 + 5 * i) as f64 / 100.0).collect()
}

fn labels(videos: &[VideoSegments]) -> BTreeSet<usize> {
    videos
        .iter()
        .flat_map(|v| v.predictions.iter().chain(&v.ground_truth).map(|s| s.label))
        .collect()
}

fn restrict(videos: &[VideoSegments], label: usize) -> Vec<VideoSegments> {
    videos
        .iter()
        .map(|v| VideoSegments {
            predictions: v.predictions.iter().filter(|s| s.label == label).copied().collect(),
            ground_truth: v.ground_truth.iter().filter(|s| s.label == label).copied().collect(),
        })
        .collect()
}

/// AP at `threshold`, averaged over every class that appears in either
/// predictions or ground truth.
pub fn class_mean_ap(videos: &[VideoSegments], threshold: f64) -> f64 {
    let labels = labels(videos);
    if labels.is_empty() {
        return 1.0;
    }
    labels
        .iter()
        .map(|&l| average_precision_videos(&restrict(videos, l), threshold))
        .sum::<f64>()
        / labels.len() as f64
}

/// Mean of [`class_mean_ap`] over `thresholds`.
pub fn map_score(videos: &[VideoSegments], thresholds: &[f64]) -> f64 {
    thresholds.iter().map(|&t| class_mean_ap(videos, t)).sum::<f64>() / thresholds.len().max(1) as f64
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ApAtThreshold {
    pub iou_threshold: f64,
    pub ap: f64,
}

/// Detection metrics over a set of videos.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DetectionMetrics {
    pub predictions: usize,
    pub ground_truth: usize,
    pub ap: Vec<ApAtThreshold>,
    pub map: f64,
    /// Pairs matched at IoU ≥ 0.5.
    pub matched: usize,
    /// Mean IoU over pairs matched at 0.5; 0 when nothing matched.
    pub mean_matched_iou: f64,
    /// Mean over ground-truth segments of their best IoU with any
    /// prediction; unmatched segments count as 0.
    pub mean_gt_best_iou: f64,
}

pub fn detection_metrics(videos: &[VideoSegments], thresholds: &[f64]) -> DetectionMetrics {
    let ap: Vec<ApAtThreshold> = thresholds
        .iter()
        .map(|&t| ApAtThreshold {
            iou_threshold: t,
            ap: class_mean_ap(videos, t),
        })
        .collect();
    let map = ap.iter().map(|a| a.ap).sum::<f64>() / ap.len().max(1) as f64;
    let mut matched_ious = Vec::new();
    for l in labels(videos) {
        let m = match_segments(&restrict(videos, l), 0.5);
        matched_ious.extend(m.ranked.iter().filter_map(|(_, g)| g.map(|(_, iou)| iou)));
    }
    let best: Vec<f64> = videos
        .iter()
        .flat_map(|v| {
            v.ground_truth.iter().map(|g| {
                v.predictions
                    .iter()
                    .filter(|p| p.label == g.label)
                    .map(|p| temporal_iou(p, g))
                    .fold(0.0, f64::max)
            })
        })
        .collect();
    let mean = |xs: &[f64]| if xs.is_empty() { 0.0 } else { xs.iter().sum::<f64>() / xs.len() as f64 };
    DetectionMetrics {
        predictions: videos.iter().map(|v| v.predictions.len()).sum(),
        ground_truth: videos.iter().map(|v| v.ground_truth.len()).sum(),
        ap,
        map,
        matched: matched_ious.len(),
        mean_matched_iou: mean(&matched_ious),
        mean_gt_best_iou: mean(&best),
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassificationMetrics {
    pub total: usize,
    pub correct: usize,
    pub accuracy: f64,
    /// `confusion[true][predicted]`.
    pub confusion: Vec<Vec<usize>>,
}

pub fn classification_metrics(predicted: &[usize], truth: &[usize], num_classes: usize) -> Result<ClassificationMetrics> {
    if predicted.len() != truth.len() {
        return Err(Error::InvalidArgument(format!(
            "{} predictions for {} labels",
            predicted.len(),
            truth.len()
        )));
    }
    let k = predicted.iter().chain(truth).map(|&l| l + 1).max().unwrap_or(0).max(num_classes);
    let mut confusion = vec![vec![0; k]; k];
    for (&p, &t) in predicted.iter().zip(truth) {
        confusion[t][p] += 1;
    }
    let correct = (0..k).map(|i| confusion[i][i]).sum();
    Ok(ClassificationMetrics {
        total: truth.len(),
        correct,
        accuracy: if truth.is_empty() { 0.0 } else { correct as f64 / truth.len() as f64 },
        confusion,
    })
}
