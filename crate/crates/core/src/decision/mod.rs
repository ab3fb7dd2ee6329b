//! Decision methods that turn overlapping window predictions into clip
//! labels and detection segments, and the metrics used to score them.

mod aggregate;
mod metrics;

use std::path::Path;

use serde::{Deserialize, Serialize};

pub use aggregate::{
    aggregate_clip, argmax, frame_curve, vote_sliding_window, ClipDecision, DecisionKind, DecisionMethod,
    WindowPrediction,
};
pub use metrics::{
    average_precision, average_precision_videos, class_mean_ap, classification_metrics, default_thresholds,
    detection_metrics, extract_segments, interpolated_ap, map_score, match_segments, temporal_iou, ApAtThreshold,
    ClassificationMetrics, DetectionMetrics, Matching, Segment, VideoSegments,
};

use crate::data::VideoAnnotations;
use crate::error::{Error, Result};

/// Segments of one video, as exchanged between `detect` and `evaluate`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SegmentFile {
    pub video: String,
    pub segments: Vec<Segment>,
}

impl From<&VideoAnnotations> for SegmentFile {
    fn from(a: &VideoAnnotations) -> Self {
        SegmentFile {
            video: a.video.clone(),
            segments: a
                .strokes
                .iter()
                .map(|s| Segment {
                    begin: s.begin,
                    end: s.end,
                    label: s.label,
                    score: 1.0,
                })
                .collect(),
        }
    }
}

/// One clip label, as exchanged between `classify` and `evaluate`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LabelRecord {
    pub video: String,
    pub label: usize,
}

fn one_or_many(value: serde_json::Value) -> Vec<serde_json::Value> {
    match value {
        serde_json::Value::Array(items) => items,
        v => vec![v],
    }
}

fn read_json(path: &Path) -> Result<serde_json::Value> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    serde_json::from_str(&text).map_err(|e| Error::Parse {
        path: path.to_path_buf(),
        line: e.line(),
        reason: e.to_string(),
    })
}

fn parse_item<T: for<'de> Deserialize<'de>>(path: &Path, v: serde_json::Value) -> Result<T> {
    serde_json::from_value(v).map_err(|e| Error::Parse {
        path: path.to_path_buf(),
        line: 0,
        reason: e.to_string(),
    })
}

/// Reads segment files: one object or an array, each either
/// `{"video", "segments"}` or an annotation file (`{"video", "frame_count",
/// "strokes"}`, scored 1).
pub fn load_segment_files(path: impl AsRef<Path>) -> Result<Vec<SegmentFile>> {
    let path = path.as_ref();
    one_or_many(read_json(path)?)
        .into_iter()
        .map(|v| {
            let file: SegmentFile = if v.get("strokes").is_some() {
                let ann: VideoAnnotations = parse_item(path, v)?;
                SegmentFile::from(&ann.validated(None)?)
            } else {
                parse_item(path, v)?
            };
            for s in &file.segments {
                s.validate()?;
            }
            Ok(file)
        })
        .collect()
}

/// Reads clip labels: one object or an array of objects with `video` and
/// `label`; annotation files contribute the label of their first stroke.
pub fn load_label_records(path: impl AsRef<Path>) -> Result<Vec<LabelRecord>> {
    let path = path.as_ref();
    one_or_many(read_json(path)?)
        .into_iter()
        .map(|v| {
            if v.get("strokes").is_some() {
                let ann: VideoAnnotations = parse_item(path, v)?;
                let first = ann.strokes.first().ok_or_else(|| Error::Parse {
                    path: path.to_path_buf(),
                    line: 0,
                    reason: format!("video {} has no annotated stroke", ann.video),
                })?;
                Ok(LabelRecord {
                    video: ann.video.clone(),
                    label: first.label,
                })
            } else {
                #[derive(Deserialize)]
                struct Loose {
                    video: String,
                    label: usize,
                }
                let l: Loose = parse_item(path, v)?;
                Ok(LabelRecord {
                    video: l.video,
                    label: l.label,
                })
            }
        })
        .collect()
}

/// Pairs items by video name; any name present on one side only, or
/// repeated, is an error.
pub fn pair_by_video<'a, P, G>(
    preds: &'a [P],
    gt: &'a [G],
    pred_name: impl Fn(&P) -> &str,
    gt_name: impl Fn(&G) -> &str,
) -> Result<Vec<(&'a P, &'a G)>> {
    let mut seen = std::collections::BTreeSet::new();
    for p in preds {
        if !seen.insert(pred_name(p)) {
            return Err(Error::Pairing(format!("video `{}` predicted twice", pred_name(p))));
        }
    }
    let mut out = Vec::with_capacity(gt.len());
    let mut gt_seen = std::collections::BTreeSet::new();
    for g in gt {
        let name = gt_name(g);
        if !gt_seen.insert(name) {
            return Err(Error::Pairing(format!("video `{name}` annotated twice")));
        }
        let p = preds
            .iter()
            .find(|p| pred_name(p) == name)
            .ok_or_else(|| Error::Pairing(format!("no prediction for video `{name}`")))?;
        out.push((p, g));
    }
    if let Some(extra) = seen.iter().find(|n| !gt_seen.contains(*n)) {
        return Err(Error::Pairing(format!("prediction for unknown video `{extra}`")));
    }
    Ok(out)
}
