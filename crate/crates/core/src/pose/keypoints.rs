use std::io::{BufRead, BufReader, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::NUM_KEYPOINTS;
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Keypoint {
    pub x: f64,
    pub y: f64,
    pub confidence: f64,
}

/// One detected person: 17 keypoints in COCO order plus a detection score.
#[derive(Debug, Clone, PartialEq)]
pub struct PersonPose {
    pub keypoints: [Keypoint; NUM_KEYPOINTS],
    pub score: f64,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct PoseFrame {
    pub frame_index: usize,
    pub persons: Vec<PersonPose>,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct FrameRecord {
    frame: u32,
    persons: Vec<PersonRecord>,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct PersonRecord {
    score: f64,
    keypoints: Vec<[f64; 3]>,
}

impl PersonPose {
    fn from_record(rec: PersonRecord) -> std::result::Result<Self, String> {
        if rec.keypoints.len() != NUM_KEYPOINTS {
            return Err(format!(
                "person has {} keypoints, expected {NUM_KEYPOINTS}",
                rec.keypoints.len()
            ));
        }
        if !(0.0..=1.0).contains(&rec.score) {
            return Err(format!("person score {} outside [0, 1]", rec.score));
        }
        let mut keypoints = [Keypoint {
            x: 0.0,
            y: 0.0,
            confidence: 0.0,
        }; NUM_KEYPOINTS];
        for (slot, [x, y, c]) in keypoints.iter_mut().zip(rec.keypoints) {
            if !(0.0..=1.0).contains(&c) {
                return Err(format!("keypoint confidence {c} outside [0, 1]"));
            }
            *slot = Keypoint { x, y, confidence: c };
        }
        Ok(PersonPose {
            keypoints,
            score: rec.score,
        })
    }

    fn to_record(&self) -> PersonRecord {
        PersonRecord {
            score: self.score,
            keypoints: self.keypoints.iter().map(|k| [k.x, k.y, k.confidence]).collect(),
        }
    }
}

/// Parses a keypoint stream from any reader; `source` names it in errors.
///
/// Frames are returned in ascending order with gaps filled by empty frames.
/// When `frame_count` is given the result has exactly that many frames.
pub fn read_keypoint_stream(
    reader: impl BufRead,
    source: &Path,
    frame_count: Option<usize>,
) -> Result<Vec<PoseFrame>> {
    let parse_err = |line: usize, reason: String| Error::Parse {
        path: source.to_path_buf(),
        line,
        reason,
    };
    let mut seen: Vec<(usize, usize, Vec<PersonPose>)> = Vec::new();
    for (i, line) in reader.lines().enumerate() {
        let lineno = i + 1;
        let line = line.map_err(|e| Error::io(source, e))?;
        if line.trim().is_empty() {
            continue;
        }
        let rec: FrameRecord =
            serde_json::from_str(&line).map_err(|e| parse_err(lineno, e.to_string()))?;
        let persons = rec
            .persons
            .into_iter()
            .map(PersonPose::from_record)
            .collect::<std::result::Result<Vec<_>, _>>()
            .map_err(|e| parse_err(lineno, e))?;
        seen.push((rec.frame as usize, lineno, persons));
    }
    seen.sort_by_key(|(f, l, _)| (*f, *l));
    for pair in seen.windows(2) {
        if pair[0].0 == pair[1].0 {
            return Err(parse_err(pair[1].1, format!("duplicate frame {}", pair[1].0)));
        }
    }
    let needed = seen.last().map_or(0, |(f, _, _)| f + 1);
    let total = match frame_count {
        Some(n) if needed > n => {
            let (f, l, _) = seen.last().unwrap();
            return Err(parse_err(*l, format!("frame {f} beyond frame count {n}")));
        }
        Some(n) => n,
        None => needed,
    };
    let mut frames: Vec<PoseFrame> = (0..total)
        .map(|frame_index| PoseFrame {
            frame_index,
            persons: Vec::new(),
        })
        .collect();
    for (f, _, persons) in seen {
        frames[f].persons = persons;
    }
    Ok(frames)
}

pub fn parse_keypoint_stream(path: impl AsRef<Path>, frame_count: Option<usize>) -> Result<Vec<PoseFrame>> {
    let path = path.as_ref();
    let file = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
    read_keypoint_stream(BufReader::new(file), path, frame_count)
}

/// Writes one JSON line per frame (empty frames included).
pub fn write_keypoint_stream(path: impl AsRef<Path>, frames: &[PoseFrame]) -> Result<()> {
    let path = path.as_ref();
    let mut out = Vec::new();
    for frame in frames {
        let rec = FrameRecord {
            frame: u32::try_from(frame.frame_index)
                .map_err(|_| Error::InvalidArgument(format!("frame index {} too large", frame.frame_index)))?,
            persons: frame.persons.iter().map(PersonPose::to_record).collect(),
        };
        serde_json::to_writer(&mut out, &rec)?;
        out.push(b'\n');
    }
    let mut file = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
    file.write_all(&out).map_err(|e| Error::io(path, e))
}
