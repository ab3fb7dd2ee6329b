use rand::Rng;

use super::StrokeAnnotation;
use crate::error::{Error, Result};

/// Detection label of windows inside strokes.
pub const STROKE: usize = 1;
/// Detection label of windows outside every stroke (and class id of the
/// non-stroke class by convention).
pub const NON_STROKE: usize = 0;

/// A training window of `length` frames.
///
/// The source frames are `[start, start + span)`. When `span < length` the
/// window is centered on them and padded by repeating the edge frames.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct WindowSample {
    pub start: usize,
    pub span: usize,
    pub length: usize,
    pub label: usize,
}

impl WindowSample {
    pub fn pad_before(&self) -> usize {
        (self.length - self.span) / 2
    }

    /// Source frame index for every window position.
    pub fn frame_indices(&self) -> Vec<usize> {
        let before = self.pad_before();
        (0..self.length)
            .map(|i| self.start + i.saturating_sub(before).min(self.span - 1))
            .collect()
    }
}

fn window_in(stroke: &StrokeAnnotation, length: usize, label: usize, rng: &mut impl Rng) -> WindowSample {
    if stroke.len() >= length {
        WindowSample {
            start: rng.random_range(stroke.begin..=stroke.end - length),
            span: length,
            length,
            label,
        }
    } else {
        WindowSample {
            start: stroke.begin,
            span: stroke.len(),
            length,
            label,
        }
    }
}

/// One window per stroke, labelled with the stroke's class.
pub fn sample_class_windows(strokes: &[StrokeAnnotation], length: usize, rng: &mut impl Rng) -> Vec<WindowSample> {
    strokes
        .iter()
        .filter(|s| !s.is_empty())
        .map(|s| window_in(s, length, s.label, rng))
        .collect()
}

/// Balanced stroke / non-stroke windows: one positive per stroke and
/// `ratio` negatives per positive drawn from windows touching no stroke.
pub fn sample_detection_windows(
    frame_count: usize,
    strokes: &[StrokeAnnotation],
    length: usize,
    ratio: usize,
    rng: &mut impl Rng,
) -> Result<Vec<WindowSample>> {
    let mut out: Vec<WindowSample> = strokes
        .iter()
        .filter(|s| !s.is_empty())
        .map(|s| window_in(s, length, STROKE, rng))
        .collect();
    let wanted = out.len() * ratio;
    if wanted == 0 {
        return Ok(out);
    }
    let free: Vec<usize> = (0..=frame_count.saturating_sub(length))
        .filter(|&s| s + length <= frame_count && !strokes.iter().any(|a| a.overlaps(s, s + length)))
        .collect();
    if free.is_empty() {
        return Err(Error::InvalidArgument(format!(
            "no {length}-frame window in {frame_count} frames avoids every stroke"
        )));
    }
    for _ in 0..wanted {
        out.push(WindowSample {
            start: free[rng.random_range(0..free.len())],
            span: length,
            length,
            label: NON_STROKE,
        });
    }
    Ok(out)
}

/// Start frames of full windows at the given stride, plus a final window
/// flush with the end so every frame is covered.
pub fn sliding_windows(frame_count: usize, length: usize, stride: usize) -> Vec<usize> {
    if length == 0 || frame_count < length {
        return Vec::new();
    }
    let last = frame_count - length;
    let mut starts: Vec<usize> = (0..=last).step_by(stride.max(1)).collect();
    if starts.last() != Some(&last) {
        starts.push(last);
    }
    starts
}
