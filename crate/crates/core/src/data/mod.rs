//! Frame sequences, stroke annotations, window sampling and the synthetic
//! stroke-video generator.

mod annotations;
mod frames;
mod sampling;
mod synthetic;

pub use annotations::{load_annotations, parse_annotations, write_annotations, StrokeAnnotation, VideoAnnotations};
pub use frames::{frame_file_name, load_frame_sequence, render_stream, write_frame_dir, FrameSequence, InputKind, Volume};
pub use sampling::{sample_class_windows, sample_detection_windows, sliding_windows, WindowSample, NON_STROKE, STROKE};
pub use synthetic::{generate_detection_video, generate_synthetic, DetectionSpec, MotionSpec, SyntheticSpec, SyntheticVideo};
