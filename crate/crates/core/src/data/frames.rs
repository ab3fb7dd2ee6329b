use std::path::{Path, PathBuf};

use image::{Rgb, RgbImage};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::pose::{compose_frame, PoseFrame, RenderMode, SkeletonSpec};
use crate::tensor::{Element, Tensor};
use crate::tten::{self, AnyTensor};

/// `frame_%06d.png`
pub fn frame_file_name(index: usize) -> String {
    format!("frame_{index:06}.png")
}

/// A decoded video: equally sized RGB frames indexed from 0.
#[derive(Debug, Clone, PartialEq)]
pub struct FrameSequence {
    pub width: u32,
    pub height: u32,
    pub frames: Vec<RgbImage>,
}

impl FrameSequence {
    pub fn new(frames: Vec<RgbImage>) -> Result<Self> {
        let (width, height) = frames.first().map_or((0, 0), |f| f.dimensions());
        if let Some((i, f)) = frames.iter().enumerate().find(|(_, f)| f.dimensions() != (width, height)) {
            return Err(Error::InvalidArgument(format!(
                "frame {i} is {:?}, frame 0 is {:?}",
                f.dimensions(),
                (width, height)
            )));
        }
        Ok(FrameSequence { width, height, frames })
    }

    pub fn frame_count(&self) -> usize {
        self.frames.len()
    }

    /// Whole video as a normalized `[0, 1]` planar volume.
    pub fn to_volume(&self) -> Volume {
        Volume::from_frames(&self.frames)
    }

    /// `1×3×T×H×W` tensor of the whole video, pixel values divided by 255.
    pub fn to_tensor<F: Element>(&self) -> Tensor<F> {
        let all: Vec<usize> = (0..self.frame_count()).collect();
        self.to_volume().window(&all)
    }

    /// Rebuilds frames from a `1×3×T×H×W` tensor with values in `[0, 1]`.
    pub fn from_tensor<F: Element>(t: &Tensor<F>) -> Result<Self> {
        let s = t.shape();
        if s.len() != 5 || s[0] != 1 || s[1] != 3 {
            return Err(Error::shape("frame tensor", format!("expected 1×3×T×H×W, got {s:?}")));
        }
        let (frames, h, w) = (s[2], s[3], s[4]);
        let plane = h * w;
        let d = t.data();
        if let Some(v) = d.iter().find(|v| !(v.to_f64() >= 0.0 && v.to_f64() <= 1.0)) {
            return Err(Error::Format(format!("pixel value {v:?} outside [0, 1]")));
        }
        let q = |c: usize, f: usize, i: usize| (d[(c * frames + f) * plane + i].to_f64() * 255.0).round() as u8;
        let images = (0..frames)
            .map(|f| {
                RgbImage::from_fn(w as u32, h as u32, |x, y| {
                    let i = y as usize * w + x as usize;
                    Rgb([q(0, f, i), q(1, f, i), q(2, f, i)])
                })
            })
            .collect();
        FrameSequence::new(images)
    }
}

/// Planar pixels `[channel][frame][row][col]`; windows come out scaled to `[0, 1]`.
#[derive(Debug, Clone, PartialEq)]
pub struct Volume {
    pub frames: usize,
    pub height: usize,
    pub width: usize,
    data: Vec<u8>,
}

impl Volume {
    pub fn from_frames(frames: &[RgbImage]) -> Self {
        let (w, h) = frames.first().map_or((0, 0), |f| f.dimensions());
        let (w, h, t) = (w as usize, h as usize, frames.len());
        let plane = w * h;
        let mut data = vec![0u8; 3 * t * plane];
        for (f, img) in frames.iter().enumerate() {
            for (i, px) in img.pixels().enumerate() {
                for c in 0..3 {
                    data[(c * t + f) * plane + i] = px.0[c];
                }
            }
        }
        Volume {
            frames: t,
            height: h,
            width: w,
            data,
        }
    }

    /// Gathers the listed frames into a `1×3×len×H×W` tensor.
    pub fn window<F: Element>(&self, indices: &[usize]) -> Tensor<F> {
        let plane = self.height * self.width;
        let mut out = Vec::with_capacity(3 * indices.len() * plane);
        for c in 0..3 {
            for &f in indices {
                let src = &self.data[(c * self.frames + f) * plane..][..plane];
                out.extend(src.iter().map(|&v| F::from_f64(v as f64 / 255.0)));
            }
        }
        Tensor::new(vec![1, 3, indices.len(), self.height, self.width], out).expect("sizes agree")
    }
}

/// Loads a PNG directory of `frame_%06d.png` files or a TTEN file.
pub fn load_frame_sequence(path: impl AsRef<Path>) -> Result<FrameSequence> {
    let path = path.as_ref();
    if path.is_file() {
        let t = match tten::read_file(path)? {
            AnyTensor::F32(t) => t,
            AnyTensor::F64(t) => t.cast(),
        };
        return FrameSequence::from_tensor(&t);
    }
    let entries = std::fs::read_dir(path).map_err(|e| Error::io(path, e))?;
    let mut indexed: Vec<(usize, PathBuf)> = Vec::new();
    for entry in entries {
        let p = entry.map_err(|e| Error::io(path, e))?.path();
        let Some(name) = p.file_name().and_then(|n| n.to_str()) else { continue };
        if let Some(num) = name.strip_prefix("frame_").and_then(|r| r.strip_suffix(".png")) {
            if num.len() == 6 {
                if let Ok(i) = num.parse::<usize>() {
                    indexed.push((i, p.clone()));
                }
            }
        }
    }
    indexed.sort();
    if let Some((pos, (i, _))) = indexed.iter().enumerate().find(|(pos, (i, _))| pos != i) {
        return Err(Error::Format(format!(
            "{}: frame indices not contiguous, expected {pos} found {i}",
            path.display()
        )));
    }
    let frames = indexed
        .iter()
        .map(|(_, p)| {
            image::open(p)
                .map(|img| img.to_rgb8())
                .map_err(|source| Error::Image { path: p.clone(), source })
        })
        .collect::<Result<Vec<_>>>()?;
    FrameSequence::new(frames)
}

pub fn write_frame_dir(frames: &[RgbImage], dir: impl AsRef<Path>) -> Result<Vec<PathBuf>> {
    let dir = dir.as_ref();
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    frames
        .iter()
        .enumerate()
        .map(|(i, f)| {
            let p = dir.join(frame_file_name(i));
            f.save(&p).map_err(|source| Error::Image { path: p.clone(), source })?;
            Ok(p)
        })
        .collect()
}

/// Which representation feeds a network branch.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum InputKind {
    Rgb,
    /// Skeleton on black.
    Pose,
    /// Skeleton over RGB.
    Prgb,
}

/// Frames of one input representation for a whole video.
pub fn render_stream(
    seq: &FrameSequence,
    poses: &[PoseFrame],
    kind: InputKind,
    spec: &SkeletonSpec,
) -> Result<Vec<RgbImage>> {
    let mode = match kind {
        InputKind::Rgb => return Ok(seq.frames.clone()),
        InputKind::Pose => RenderMode::Black,
        InputKind::Prgb => RenderMode::Overlay,
    };
    let empty = PoseFrame::default();
    seq.frames
        .iter()
        .enumerate()
        .map(|(i, f)| compose_frame(mode, Some(f), (seq.width, seq.height), poses.get(i).unwrap_or(&empty), spec))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn video(t: usize) -> FrameSequence {
        FrameSequence::new(
            (0..t)
                .map(|f| RgbImage::from_fn(5, 4, |x, y| Rgb([(x * 50) as u8, (y * 60) as u8, (f * 100 % 256) as u8])))
                .collect(),
        )
        .unwrap()
    }

    #[test]
    fn black_is_zero_and_white_is_one() {
        let black = FrameSequence::new(vec![RgbImage::new(3, 2); 2]).unwrap();
        assert!(black.to_tensor::<f32>().data().iter().all(|&v| v == 0.0));
        let white = FrameSequence::new(vec![RgbImage::from_pixel(3, 2, Rgb([255; 3]))]).unwrap();
        assert!(white.to_tensor::<f32>().data().iter().all(|&v| v == 1.0));
    }

    #[test]
    fn layout_is_channel_time_row_col() {
        let v = video(3);
        let t = v.to_tensor::<f64>();
        assert_eq!(t.shape(), &[1, 3, 3, 4, 5]);
        // channel 0 at (t=0, y=1, x=2) is x*50
        assert_eq!(t.data()[(0 * 3 + 0) * 20 + 1 * 5 + 2], 100.0 / 255.0);
        // channel 2 at t=2 is 200
        assert_eq!(t.data()[(2 * 3 + 2) * 20], 200.0 / 255.0);
    }

    #[test]
    fn png_dir_and_tten_agree() {
        let dir = tempfile::tempdir().unwrap();
        let v = video(3);
        write_frame_dir(&v.frames, dir.path().join("frames")).unwrap();
        tten::write_file(dir.path().join("v.tten"), &v.to_tensor::<f32>()).unwrap();
        let a = load_frame_sequence(dir.path().join("frames")).unwrap();
        let b = load_frame_sequence(dir.path().join("v.tten")).unwrap();
        assert_eq!(a, v);
        assert_eq!(a.to_tensor::<f32>(), b.to_tensor::<f32>());
    }

    #[test]
    fn inconsistent_sizes_rejected() {
        assert!(FrameSequence::new(vec![RgbImage::new(3, 2), RgbImage::new(2, 3)]).is_err());
        let dir = tempfile::tempdir().unwrap();
        RgbImage::new(3, 2).save(dir.path().join(frame_file_name(0))).unwrap();
        RgbImage::new(4, 2).save(dir.path().join(frame_file_name(1))).unwrap();
        assert!(load_frame_sequence(dir.path()).is_err());
    }

    #[test]
    fn gap_in_frame_files_rejected() {
        let dir = tempfile::tempdir().unwrap();
        RgbImage::new(3, 2).save(dir.path().join(frame_file_name(0))).unwrap();
        RgbImage::new(3, 2).save(dir.path().join(frame_file_name(2))).unwrap();
        assert!(load_frame_sequence(dir.path()).is_err());
    }

    #[test]
    fn window_repeats_indices() {
        let v = video(3).to_volume();
        let w = v.window::<f32>(&[0, 0, 2]);
        assert_eq!(w.shape(), &[1, 3, 3, 4, 5]);
        assert_eq!(w.data()[..20], w.data()[20..40]);
    }
}
