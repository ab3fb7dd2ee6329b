use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::data::{
    generate_detection_video, generate_synthetic, load_annotations, load_frame_sequence, render_stream,
    write_annotations, write_frame_dir, FrameSequence, InputKind, SyntheticSpec, SyntheticVideo, VideoAnnotations,
    Volume,
};
use crate::error::{Error, Result};
use crate::pose::{parse_keypoint_stream, write_keypoint_stream, PoseFrame, SkeletonSpec};

pub const MANIFEST_FILE: &str = "manifest.json";
pub const SPEC_FILE: &str = "spec.json";
pub const FRAMES_DIR: &str = "frames";
pub const FRAMES_TTEN: &str = "frames.tten";
pub const POSES_FILE: &str = "poses.jsonl";
pub const ANNOTATIONS_FILE: &str = "annotations.json";

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ManifestVideo {
    pub name: String,
    /// Directory relative to the dataset root.
    pub dir: String,
    pub frame_count: usize,
}

/// Index of a dataset directory.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Manifest {
    pub videos: Vec<ManifestVideo>,
    /// Every file of the dataset except the manifest, relative to the root,
    /// with `/` separators, sorted.
    pub files: Vec<String>,
}

fn relative(root: &Path, path: &Path) -> String {
    path.strip_prefix(root)
        .unwrap_or(path)
        .components()
        .map(|c| c.as_os_str().to_string_lossy().into_owned())
        .collect::<Vec<_>>()
        .join("/")
}

fn write_bytes(path: &Path, bytes: &[u8]) -> Result<()> {
    if let Some(parent) = path.parent() {
        std::fs::create_dir_all(parent).map_err(|e| Error::io(parent, e))?;
    }
    std::fs::write(path, bytes).map_err(|e| Error::io(path, e))
}

/// Writes `frames/`, `poses.jsonl` and `annotations.json` under `dir`.
pub fn write_video(video: &SyntheticVideo, dir: &Path) -> Result<Vec<PathBuf>> {
    let mut files = write_frame_dir(&video.frames, dir.join(FRAMES_DIR))?;
    let poses = dir.join(POSES_FILE);
    write_keypoint_stream(&poses, &video.poses)?;
    let ann = dir.join(ANNOTATIONS_FILE);
    write_annotations(&ann, &video.annotations)?;
    files.push(poses);
    files.push(ann);
    Ok(files)
}

/// Generates the synthetic dataset described by `spec` under `root`:
/// classification clips, then detection videos when requested, the spec
/// itself and a manifest.
pub fn write_synthetic_dataset(spec: &SyntheticSpec, root: &Path) -> Result<Manifest> {
    spec.validate()?;
    let mut videos = generate_synthetic(spec)?;
    if let Some(det) = &spec.detection {
        for i in 0..det.videos {
            videos.push(generate_detection_video(spec, i)?);
        }
    }
    let mut files = Vec::new();
    let mut entries = Vec::with_capacity(videos.len());
    for v in &videos {
        let dir = root.join("videos").join(&v.name);
        files.extend(write_video(v, &dir)?);
        entries.push(ManifestVideo {
            name: v.name.clone(),
            dir: relative(root, &dir),
            frame_count: v.frames.len(),
        });
    }
    let spec_path = root.join(SPEC_FILE);
    write_bytes(&spec_path, &serde_json::to_vec_pretty(spec)?)?;
    files.push(spec_path);
    let mut names: Vec<String> = files.iter().map(|f| relative(root, f)).collect();
    names.sort();
    let manifest = Manifest {
        videos: entries,
        files: names,
    };
    write_bytes(&root.join(MANIFEST_FILE), &serde_json::to_vec_pretty(&manifest)?)?;
    Ok(manifest)
}

pub fn read_manifest(root: &Path) -> Result<Manifest> {
    let path = root.join(MANIFEST_FILE);
    let text = std::fs::read_to_string(&path).map_err(|e| Error::io(&path, e))?;
    serde_json::from_str(&text).map_err(|e| Error::Parse {
        path,
        line: e.line(),
        reason: e.to_string(),
    })
}

/// A video loaded for training or inference: one volume per input stream.
#[derive(Debug, Clone)]
pub struct VideoData {
    pub name: String,
    pub frame_count: usize,
    pub width: usize,
    pub height: usize,
    pub annotations: Option<VideoAnnotations>,
    pub streams: Vec<Volume>,
}

/// Frames of a video directory: `frames/` PNGs, or `frames.tten`.
pub fn load_video_frames(dir: &Path) -> Result<FrameSequence> {
    let png = dir.join(FRAMES_DIR);
    if png.is_dir() {
        return load_frame_sequence(png);
    }
    let tten = dir.join(FRAMES_TTEN);
    if tten.is_file() {
        return load_frame_sequence(tten);
    }
    Err(Error::io(
        &png,
        std::io::Error::new(std::io::ErrorKind::NotFound, "no frames/ directory or frames.tten"),
    ))
}

/// Builds stream volumes from frames and poses already in memory.
pub fn video_from_parts(
    name: String,
    seq: &FrameSequence,
    poses: &[PoseFrame],
    annotations: Option<VideoAnnotations>,
    streams: &[InputKind],
    skeleton: &SkeletonSpec,
) -> Result<VideoData> {
    let volumes = streams
        .iter()
        .map(|&k| Ok(Volume::from_frames(&render_stream(seq, poses, k, skeleton)?)))
        .collect::<Result<Vec<_>>>()?;
    Ok(VideoData {
        name,
        frame_count: seq.frame_count(),
        width: seq.width as usize,
        height: seq.height as usize,
        annotations,
        streams: volumes,
    })
}

/// Loads a video directory. Poses are required only when a stream draws
/// skeletons; annotations are optional.
pub fn load_video(
    dir: &Path,
    streams: &[InputKind],
    skeleton: &SkeletonSpec,
    num_classes: Option<usize>,
) -> Result<VideoData> {
    let seq = load_video_frames(dir)?;
    let needs_pose = streams.iter().any(|k| *k != InputKind::Rgb);
    let pose_path = dir.join(POSES_FILE);
    let poses = if needs_pose || pose_path.is_file() {
        parse_keypoint_stream(&pose_path, Some(seq.frame_count()))?
    } else {
        Vec::new()
    };
    let ann_path = dir.join(ANNOTATIONS_FILE);
    let annotations = if ann_path.is_file() {
        let a = load_annotations(&ann_path, num_classes)?;
        if a.frame_count != seq.frame_count() {
            return Err(Error::Format(format!(
                "{}: annotations cover {} frames but the video has {}",
                ann_path.display(),
                a.frame_count,
                seq.frame_count()
            )));
        }
        Some(a)
    } else {
        None
    };
    let name = annotations.as_ref().map(|a| a.video.clone()).unwrap_or_else(|| {
        dir.file_name()
            .map(|n| n.to_string_lossy().into_owned())
            .unwrap_or_else(|| "video".into())
    });
    video_from_parts(name, &seq, &poses, annotations, streams, skeleton)
}

/// Loads the manifest videos of `root`, optionally restricted to `names`.
pub fn load_dataset(
    root: &Path,
    names: Option<&[String]>,
    streams: &[InputKind],
    skeleton: &SkeletonSpec,
    num_classes: Option<usize>,
) -> Result<Vec<VideoData>> {
    let manifest = read_manifest(root)?;
    if let Some(names) = names {
        if let Some(missing) = names.iter().find(|n| !manifest.videos.iter().any(|v| &v.name == *n)) {
            return Err(Error::InvalidArgument(format!("video `{missing}` is not in the dataset manifest")));
        }
    }
    manifest
        .videos
        .iter()
        .filter(|v| names.is_none_or(|n| n.contains(&v.name)))
        .map(|v| load_video(&root.join(&v.dir), streams, skeleton, num_classes))
        .collect()
}
