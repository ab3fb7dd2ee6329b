//! Synthetic stroke videos: a bright blob over a static textured
//! background, moving along a class-specific path during strokes and
//! resting between them, with a stick figure attached to it.

use std::f64::consts::PI;

use image::{Rgb, RgbImage};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{StrokeAnnotation, VideoAnnotations};
use crate::error::{Error, Result};
use crate::pose::{Keypoint, PersonPose, PoseFrame, NUM_KEYPOINTS};

/// Trajectory of one class, expressed over the normalized stroke time
/// `u ∈ [0, 1)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MotionSpec {
    /// Direction of the main excursion, degrees counter-clockwise from +x.
    pub direction_deg: f64,
    /// Out-and-back excursions per stroke; 0 keeps the blob still.
    pub cycles: u32,
    /// Perpendicular oscillation periods per stroke.
    pub oscillation: u32,
    /// Perpendicular oscillation amplitude as a fraction of the main one.
    pub oscillation_amplitude: f64,
}

impl MotionSpec {
    /// Default trajectories: class 0 is still (the non-stroke class),
    /// the others spread their directions evenly around the circle.
    pub fn defaults(num_classes: usize) -> Vec<MotionSpec> {
        (0..num_classes)
            .map(|k| {
                if k == 0 {
                    MotionSpec {
                        direction_deg: 0.0,
                        cycles: 0,
                        oscillation: 0,
                        oscillation_amplitude: 0.0,
                    }
                } else {
                    MotionSpec {
                        direction_deg: 360.0 * (k - 1) as f64 / (num_classes - 1) as f64,
                        cycles: 1,
                        oscillation: k as u32,
                        oscillation_amplitude: 0.3,
                    }
                }
            })
            .collect()
    }

    /// Offset from the rest point at normalized time `u`, in units of the
    /// main amplitude.
    fn offset(&self, u: f64) -> (f64, f64) {
        let (s, c) = self.direction_deg.to_radians().sin_cos();
        let main = (PI * self.cycles as f64 * u).sin().abs();
        let side = self.oscillation_amplitude * (2.0 * PI * self.oscillation as f64 * u).sin();
        (main * c - side * s, -(main * s + side * c))
    }
}

/// Long videos with several planted strokes, for detection.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DetectionSpec {
    pub videos: usize,
    pub frame_count: usize,
    pub strokes: usize,
    pub min_stroke: usize,
    pub max_stroke: usize,
}

impl Default for DetectionSpec {
    fn default() -> Self {
        DetectionSpec {
            videos: 1,
            frame_count: 2000,
            strokes: 10,
            min_stroke: 60,
            max_stroke: 100,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SyntheticSpec {
    pub num_classes: usize,
    /// Classification clips per class, each one stroke spanning the clip.
    pub clips_per_class: usize,
    /// Frames per classification clip.
    pub frame_count: usize,
    pub width: u32,
    pub height: u32,
    pub blob_radius: f64,
    /// Main excursion as a fraction of the smaller frame side.
    pub amplitude: f64,
    /// Per-class trajectories; empty selects [`MotionSpec::defaults`].
    pub motions: Vec<MotionSpec>,
    pub seed: u64,
    pub detection: Option<DetectionSpec>,
}

impl Default for SyntheticSpec {
    fn default() -> Self {
        SyntheticSpec {
            num_classes: 4,
            clips_per_class: 32,
            frame_count: 16,
            width: 32,
            height: 32,
            blob_radius: 3.0,
            amplitude: 0.3,
            motions: Vec::new(),
            seed: 0,
            detection: None,
        }
    }
}

impl SyntheticSpec {
    pub fn validate(&self) -> Result<()> {
        if self.num_classes < 2 {
            return Err(Error::config("num_classes", "must be at least 2"));
        }
        if self.width < 4 || self.height < 4 {
            return Err(Error::config("width", "frames must be at least 4×4"));
        }
        if self.frame_count == 0 {
            return Err(Error::config("frame_count", "must be positive"));
        }
        if !(self.blob_radius > 0.0) {
            return Err(Error::config("blob_radius", "must be positive"));
        }
        if !(0.0..=0.5).contains(&self.amplitude) {
            return Err(Error::config("amplitude", "must lie in [0, 0.5]"));
        }
        if !self.motions.is_empty() && self.motions.len() != self.num_classes {
            return Err(Error::config(
                "motions",
                format!("expected {} entries, found {}", self.num_classes, self.motions.len()),
            ));
        }
        if let Some(d) = &self.detection {
            if d.min_stroke == 0 || d.min_stroke > d.max_stroke {
                return Err(Error::config("detection", "need 0 < min_stroke <= max_stroke"));
            }
            if d.strokes * (d.max_stroke + 1) + 1 > d.frame_count {
                return Err(Error::config("detection", "strokes do not fit in frame_count"));
            }
        }
        Ok(())
    }

    pub fn motions(&self) -> Vec<MotionSpec> {
        if self.motions.is_empty() {
            MotionSpec::defaults(self.num_classes)
        } else {
            self.motions.clone()
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SyntheticVideo {
    pub name: String,
    pub frames: Vec<RgbImage>,
    pub poses: Vec<PoseFrame>,
    pub annotations: VideoAnnotations,
}

/// Per-video appearance drawn once from the video's random stream.
struct Scene {
    background: RgbImage,
    rest: (f64, f64),
    amplitude: f64,
    angle_jitter: f64,
    radius: f64,
}

impl Scene {
    fn draw(spec: &SyntheticSpec, rng: &mut ChaCha8Rng) -> Scene {
        let (w, h) = (spec.width, spec.height);
        // coarse 4×4-pixel texture so the background is static but not flat
        let cells: Vec<u8> = (0..w.div_ceil(4) * h.div_ceil(4)).map(|_| rng.random_range(10..70)).collect();
        let tint: [f64; 3] = [rng.random_range(0.6..1.0), rng.random_range(0.6..1.0), rng.random_range(0.6..1.0)];
        let background = RgbImage::from_fn(w, h, |x, y| {
            let v = cells[((y / 4) * w.div_ceil(4) + x / 4) as usize] as f64;
            Rgb([(v * tint[0]) as u8, (v * tint[1]) as u8, (v * tint[2]) as u8])
        });
        let side = w.min(h) as f64;
        let jitter = 0.08 * side;
        Scene {
            background,
            rest: (
                w as f64 / 2.0 + rng.random_range(-jitter..=jitter),
                h as f64 / 2.0 + rng.random_range(-jitter..=jitter),
            ),
            amplitude: spec.amplitude * side * rng.random_range(0.85..=1.15),
            angle_jitter: rng.random_range(-10.0..=10.0),
            radius: spec.blob_radius,
        }
    }

    fn position(&self, motion: Option<&MotionSpec>, u: f64) -> (f64, f64) {
        match motion {
            None => self.rest,
            Some(m) => {
                let m = MotionSpec {
                    direction_deg: m.direction_deg + self.angle_jitter,
                    ..m.clone()
                };
                let (dx, dy) = m.offset(u);
                (self.rest.0 + self.amplitude * dx, self.rest.1 + self.amplitude * dy)
            }
        }
    }

    fn frame(&self, center: (f64, f64)) -> RgbImage {
        let mut img = self.background.clone();
        let r = self.radius;
        for (x, y, px) in img.enumerate_pixels_mut() {
            let d = ((x as f64 + 0.5 - center.0).powi(2) + (y as f64 + 0.5 - center.1).powi(2)).sqrt();
            let a = (r + 1.0 - d).clamp(0.0, 1.0);
            if a > 0.0 {
                for (c, target) in px.0.iter_mut().zip([255.0, 240.0, 200.0]) {
                    *c = (*c as f64 * (1.0 - a) + target * a).round() as u8;
                }
            }
        }
        img
    }

    /// A stick figure standing left of the blob with its right wrist on it.
    fn pose(&self, frame_index: usize, center: (f64, f64)) -> PoseFrame {
        let s = self.radius * 1.5;
        let (bx, by) = (self.rest.0 - 2.0 * s, self.rest.1);
        // body-relative layout in COCO order, units of `s`
        const LAYOUT: [(f64, f64); NUM_KEYPOINTS] = [
            (0.0, -3.0),
            (-0.3, -3.2),
            (0.3, -3.2),
            (-0.6, -3.0),
            (0.6, -3.0),
            (-1.0, -2.0),
            (1.0, -2.0),
            (-1.5, -0.8),
            (1.5, -0.8),
            (-1.8, 0.3),
            (1.8, 0.3),
            (-0.7, 0.5),
            (0.7, 0.5),
            (-0.8, 2.0),
            (0.8, 2.0),
            (-0.9, 3.5),
            (0.9, 3.5),
        ];
        let mut keypoints = LAYOUT.map(|(x, y)| Keypoint {
            x: bx + x * s,
            y: by + y * s,
            confidence: 0.9,
        });
        // the right arm reaches for the blob
        let shoulder = (keypoints[6].x, keypoints[6].y);
        keypoints[10].x = center.0;
        keypoints[10].y = center.1;
        keypoints[8].x = (shoulder.0 + center.0) / 2.0;
        keypoints[8].y = (shoulder.1 + center.1) / 2.0 + 0.5 * s;
        PoseFrame {
            frame_index,
            persons: vec![PersonPose { keypoints, score: 0.95 }],
        }
    }
}

fn video_rng(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

/// Renders `frame_count` frames with the given strokes planted.
fn render_video(
    name: String,
    scene: &Scene,
    frame_count: usize,
    strokes: Vec<StrokeAnnotation>,
    motions: &[MotionSpec],
) -> SyntheticVideo {
    let mut frames = Vec::with_capacity(frame_count);
    let mut poses = Vec::with_capacity(frame_count);
    let mut active = strokes.iter().peekable();
    for t in 0..frame_count {
        while active.peek().is_some_and(|s| s.end <= t) {
            active.next();
        }
        let center = match active.peek() {
            Some(s) if s.begin <= t => {
                let u = (t - s.begin) as f64 / s.len() as f64;
                scene.position(Some(&motions[s.label]), u)
            }
            _ => scene.rest,
        };
        frames.push(scene.frame(center));
        poses.push(scene.pose(t, center));
    }
    SyntheticVideo {
        annotations: VideoAnnotations {
            video: name.clone(),
            frame_count,
            strokes,
        },
        name,
        frames,
        poses,
    }
}

/// Classification clips, class-major: `clip_c{k}_{i}` holds one stroke of
/// class `k` covering all of its frames.
pub fn generate_synthetic(spec: &SyntheticSpec) -> Result<Vec<SyntheticVideo>> {
    spec.validate()?;
    let motions = spec.motions();
    let mut out = Vec::with_capacity(spec.num_classes * spec.clips_per_class);
    for k in 0..spec.num_classes {
        for i in 0..spec.clips_per_class {
            let mut rng = video_rng(spec.seed, (k * spec.clips_per_class + i) as u64);
            let scene = Scene::draw(spec, &mut rng);
            let stroke = StrokeAnnotation {
                begin: 0,
                end: spec.frame_count,
                label: k,
            };
            out.push(render_video(format!("clip_c{k}_{i:03}"), &scene, spec.frame_count, vec![stroke], &motions));
        }
    }
    Ok(out)
}

/// Detection video `index`: strokes of classes `1..num_classes` planted at
/// random non-touching positions, the blob resting elsewhere.
pub fn generate_detection_video(spec: &SyntheticSpec, index: usize) -> Result<SyntheticVideo> {
    spec.validate()?;
    let det = spec.detection.clone().unwrap_or_default();
    if det.strokes * (det.max_stroke + 1) + 1 > det.frame_count {
        return Err(Error::config("detection", "strokes do not fit in frame_count"));
    }
    let motions = spec.motions();
    let mut rng = video_rng(spec.seed, (1u64 << 32) + index as u64);
    let scene = Scene::draw(spec, &mut rng);

    let lengths: Vec<usize> = (0..det.strokes)
        .map(|_| rng.random_range(det.min_stroke..=det.max_stroke))
        .collect();
    // distribute the slack over the strokes.len()+1 gaps, each gap ≥ 1
    let gaps = det.strokes + 1;
    let slack = det.frame_count - lengths.iter().sum::<usize>() - gaps;
    let mut cuts: Vec<usize> = (0..gaps - 1).map(|_| rng.random_range(0..=slack)).collect();
    cuts.sort_unstable();
    let mut strokes = Vec::with_capacity(det.strokes);
    let (mut t, mut prev) = (0, 0);
    for (i, &len) in lengths.iter().enumerate() {
        t += 1 + cuts[i] - prev;
        prev = cuts[i];
        let label = if spec.num_classes > 1 { 1 + rng.random_range(0..spec.num_classes - 1) } else { 0 };
        strokes.push(StrokeAnnotation {
            begin: t,
            end: t + len,
            label,
        });
        t += len;
    }
    Ok(render_video(format!("detect_{index:03}"), &scene, det.frame_count, strokes, &motions))
}
