use image::{Rgb, RgbImage};
use serde::{Deserialize, Serialize};

use super::{PersonPose, PoseFrame, NUM_KEYPOINTS};
use crate::error::{Error, Result};

/// Background used by [`compose_frame`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum RenderMode {
    /// Skeleton on an all-zero canvas (the "Pose" input).
    Black,
    /// Skeleton over the source RGB frame (the "PRGB" input).
    Overlay,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct SkeletonEdge {
    pub from: usize,
    pub to: usize,
    pub color: [u8; 3],
}

/// Drawing recipe for a COCO skeleton.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SkeletonSpec {
    pub edges: Vec<SkeletonEdge>,
    /// Disc color per keypoint.
    pub keypoint_colors: Vec<[u8; 3]>,
    pub keypoint_radius: u32,
    pub line_thickness: u32,
    /// Persons scoring below this are skipped entirely.
    pub person_threshold: f64,
    /// Keypoints below this confidence are not drawn, nor are their edges.
    pub keypoint_threshold: f64,
}

// Limb-group palette.
const HEAD: [u8; 3] = [255, 200, 0];
const TORSO: [u8; 3] = [0, 255, 255];
const LEFT_ARM: [u8; 3] = [255, 0, 0];
const RIGHT_ARM: [u8; 3] = [0, 255, 0];
const LEFT_LEG: [u8; 3] = [0, 0, 255];
const RIGHT_LEG: [u8; 3] = [255, 0, 255];

impl Default for SkeletonSpec {
    fn default() -> Self {
        let edge = |from, to, color| SkeletonEdge { from, to, color };
        let edges = vec![
            edge(1, 2, HEAD),
            edge(0, 1, HEAD),
            edge(0, 2, HEAD),
            edge(1, 3, HEAD),
            edge(2, 4, HEAD),
            edge(3, 5, HEAD),
            edge(4, 6, HEAD),
            edge(5, 6, TORSO),
            edge(5, 11, TORSO),
            edge(6, 12, TORSO),
            edge(11, 12, TORSO),
            edge(5, 7, LEFT_ARM),
            edge(7, 9, LEFT_ARM),
            edge(6, 8, RIGHT_ARM),
            edge(8, 10, RIGHT_ARM),
            edge(11, 13, LEFT_LEG),
            edge(13, 15, LEFT_LEG),
            edge(12, 14, RIGHT_LEG),
            edge(14, 16, RIGHT_LEG),
        ];
        let keypoint_colors = vec![
            HEAD, HEAD, HEAD, HEAD, HEAD, LEFT_ARM, RIGHT_ARM, LEFT_ARM, RIGHT_ARM, LEFT_ARM, RIGHT_ARM, LEFT_LEG,
            RIGHT_LEG, LEFT_LEG, RIGHT_LEG, LEFT_LEG, RIGHT_LEG,
        ];
        SkeletonSpec {
            edges,
            keypoint_colors,
            keypoint_radius: 2,
            line_thickness: 2,
            person_threshold: 0.5,
            keypoint_threshold: 0.3,
        }
    }
}

impl SkeletonSpec {
    pub fn validate(&self) -> Result<()> {
        if let Some(e) = self
            .edges
            .iter()
            .find(|e| e.from >= NUM_KEYPOINTS || e.to >= NUM_KEYPOINTS)
        {
            return Err(Error::config(
                "edges",
                format!("edge ({}, {}) references a keypoint >= {NUM_KEYPOINTS}", e.from, e.to),
            ));
        }
        if self.keypoint_colors.len() != NUM_KEYPOINTS {
            return Err(Error::config(
                "keypoint_colors",
                format!("need {NUM_KEYPOINTS} colors, got {}", self.keypoint_colors.len()),
            ));
        }
        Ok(())
    }

    /// Every color this spec can draw.
    pub fn palette(&self) -> Vec<[u8; 3]> {
        let mut p: Vec<[u8; 3]> = self
            .edges
            .iter()
            .map(|e| e.color)
            .chain(self.keypoint_colors.iter().copied())
            .collect();
        p.sort_unstable();
        p.dedup();
        p
    }
}

/// Clips segment `a→b` to an axis-aligned box (Liang–Barsky).
fn clip_segment(a: (f64, f64), b: (f64, f64), lo: (f64, f64), hi: (f64, f64)) -> Option<((f64, f64), (f64, f64))> {
    let (dx, dy) = (b.0 - a.0, b.1 - a.1);
    let (mut t0, mut t1) = (0.0f64, 1.0f64);
    for (p, q) in [
        (-dx, a.0 - lo.0),
        (dx, hi.0 - a.0),
        (-dy, a.1 - lo.1),
        (dy, hi.1 - a.1),
    ] {
        if p == 0.0 {
            if q < 0.0 {
                return None;
            }
        } else {
            let r = q / p;
            if p < 0.0 {
                t0 = t0.max(r);
            } else {
                t1 = t1.min(r);
            }
        }
    }
    (t0 <= t1).then(|| ((a.0 + t0 * dx, a.1 + t0 * dy), (a.0 + t1 * dx, a.1 + t1 * dy)))
}

fn stamp(canvas: &mut RgbImage, x: i64, y: i64, thickness: u32, color: [u8; 3]) {
    let lo = -((thickness as i64 - 1) / 2);
    let hi = thickness as i64 / 2;
    for py in y + lo..=y + hi {
        for px in x + lo..=x + hi {
            put(canvas, px, py, color);
        }
    }
}

#[inline]
fn put(canvas: &mut RgbImage, x: i64, y: i64, color: [u8; 3]) {
    if x >= 0 && y >= 0 && (x as u64) < canvas.width() as u64 && (y as u64) < canvas.height() as u64 {
        canvas.put_pixel(x as u32, y as u32, Rgb(color));
    }
}

/// Integer (Bresenham) line with a square brush of side `thickness`.
///
/// Endpoints are rounded to the nearest pixel; geometry outside the canvas
/// is clipped.
pub fn draw_line(canvas: &mut RgbImage, from: (f64, f64), to: (f64, f64), thickness: u32, color: [u8; 3]) {
    if thickness == 0 || ![from.0, from.1, to.0, to.1].iter().all(|v| v.is_finite()) {
        return;
    }
    let margin = thickness as f64 + 2.0;
    let lo = (-margin, -margin);
    let hi = (canvas.width() as f64 + margin, canvas.height() as f64 + margin);
    let Some((a, b)) = clip_segment(from, to, lo, hi) else {
        return;
    };
    let (mut x0, mut y0) = (a.0.round() as i64, a.1.round() as i64);
    let (x1, y1) = (b.0.round() as i64, b.1.round() as i64);
    let dx = (x1 - x0).abs();
    let dy = -(y1 - y0).abs();
    let sx = if x0 < x1 { 1 } else { -1 };
    let sy = if y0 < y1 { 1 } else { -1 };
    let mut err = dx + dy;
    loop {
        stamp(canvas, x0, y0, thickness, color);
        if x0 == x1 && y0 == y1 {
            break;
        }
        let e2 = 2 * err;
        if e2 >= dy {
            err += dy;
            x0 += sx;
        }
        if e2 <= dx {
            err += dx;
            y0 += sy;
        }
    }
}

fn draw_disc(canvas: &mut RgbImage, center: (f64, f64), radius: u32, color: [u8; 3]) {
    if !(center.0.is_finite() && center.1.is_finite()) {
        return;
    }
    let r = radius as i64;
    let (w, h) = (canvas.width() as f64, canvas.height() as f64);
    let reach = radius as f64 + 1.0;
    if center.0 < -reach || center.1 < -reach || center.0 > w + reach || center.1 > h + reach {
        return;
    }
    let (cx, cy) = (center.0.round() as i64, center.1.round() as i64);
    for dy in -r..=r {
        for dx in -r..=r {
            if dx * dx + dy * dy <= r * r {
                put(canvas, cx + dx, cy + dy, color);
            }
        }
    }
}

/// Draws every sufficiently confident person onto `canvas`, in order.
pub fn rasterize_skeleton(canvas: &mut RgbImage, persons: &[PersonPose], spec: &SkeletonSpec) {
    if canvas.width() == 0 || canvas.height() == 0 {
        return;
    }
    for person in persons.iter().filter(|p| p.score >= spec.person_threshold) {
        let kp = &person.keypoints;
        let visible = |i: usize| kp[i].confidence >= spec.keypoint_threshold;
        for edge in &spec.edges {
            if edge.from < NUM_KEYPOINTS && edge.to < NUM_KEYPOINTS && visible(edge.from) && visible(edge.to) {
                let (a, b) = (&kp[edge.from], &kp[edge.to]);
                draw_line(canvas, (a.x, a.y), (b.x, b.y), spec.line_thickness, edge.color);
            }
        }
        for (i, k) in kp.iter().enumerate() {
            if visible(i) {
                if let Some(&color) = spec.keypoint_colors.get(i) {
                    draw_disc(canvas, (k.x, k.y), spec.keypoint_radius, color);
                }
            }
        }
    }
}

/// Builds one network input frame: a skeleton on black or over `base`.
pub fn compose_frame(
    mode: RenderMode,
    base: Option<&RgbImage>,
    (width, height): (u32, u32),
    poses: &PoseFrame,
    spec: &SkeletonSpec,
) -> Result<RgbImage> {
    let mut canvas = match mode {
        RenderMode::Black => RgbImage::new(width, height),
        RenderMode::Overlay => {
            let base = base.ok_or_else(|| Error::InvalidArgument("overlay rendering needs a base frame".into()))?;
            if base.dimensions() != (width, height) {
                return Err(Error::InvalidArgument(format!(
                    "base frame is {:?}, expected {:?}",
                    base.dimensions(),
                    (width, height)
                )));
            }
            base.clone()
        }
    };
    rasterize_skeleton(&mut canvas, &poses.persons, spec);
    Ok(canvas)
}
