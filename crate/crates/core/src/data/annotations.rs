use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// A labelled half-open frame interval `[begin, end)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct StrokeAnnotation {
    pub begin: usize,
    pub end: usize,
    pub label: usize,
}

impl StrokeAnnotation {
    pub fn len(&self) -> usize {
        self.end - self.begin
    }

    pub fn is_empty(&self) -> bool {
        self.end <= self.begin
    }

    pub fn overlaps(&self, begin: usize, end: usize) -> bool {
        self.begin < end && begin < self.end
    }
}

/// Annotation file contents for one video.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct VideoAnnotations {
    pub video: String,
    pub frame_count: usize,
    pub strokes: Vec<StrokeAnnotation>,
}

impl VideoAnnotations {
    /// Sorts strokes by `begin` and checks bounds, labels and overlaps.
    pub fn validated(mut self, num_classes: Option<usize>) -> Result<Self> {
        for (i, s) in self.strokes.iter().enumerate() {
            if s.begin >= s.end {
                return Err(Error::InvalidArgument(format!(
                    "stroke {i}: begin {} must be < end {}",
                    s.begin, s.end
                )));
            }
            if s.end > self.frame_count {
                return Err(Error::InvalidArgument(format!(
                    "stroke {i}: end {} exceeds frame count {}",
                    s.end, self.frame_count
                )));
            }
            if let Some(k) = num_classes {
                if s.label >= k {
                    return Err(Error::InvalidArgument(format!(
                        "stroke {i}: label {} out of range for {k} classes",
                        s.label
                    )));
                }
            }
        }
        let mut order: Vec<usize> = (0..self.strokes.len()).collect();
        order.sort_by_key(|&i| (self.strokes[i].begin, self.strokes[i].end));
        for w in order.windows(2) {
            let (a, b) = (self.strokes[w[0]], self.strokes[w[1]]);
            if b.begin < a.end {
                return Err(Error::InvalidArgument(format!(
                    "stroke {} [{}, {}) overlaps stroke {} [{}, {})",
                    w[0], a.begin, a.end, w[1], b.begin, b.end
                )));
            }
        }
        self.strokes = order.into_iter().map(|i| self.strokes[i]).collect();
        Ok(self)
    }
}

pub fn parse_annotations(text: &str, num_classes: Option<usize>) -> Result<VideoAnnotations> {
    serde_json::from_str::<VideoAnnotations>(text)?.validated(num_classes)
}

pub fn load_annotations(path: impl AsRef<Path>, num_classes: Option<usize>) -> Result<VideoAnnotations> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_annotations(&text, num_classes)
}

pub fn write_annotations(path: impl AsRef<Path>, ann: &VideoAnnotations) -> Result<()> {
    let path = path.as_ref();
    let text = serde_json::to_string_pretty(ann)?;
    std::fs::write(path, text).map_err(|e| Error::io(path, e))
}
