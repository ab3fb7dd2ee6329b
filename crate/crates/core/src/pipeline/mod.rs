//! End-to-end runs: run configuration, dataset directories, training and
//! inference over videos.

mod config;
mod dataset;
mod infer;
mod train;

pub use config::{Profile, RunConfig, Task};
pub use dataset::{
    load_dataset, load_video, load_video_frames, read_manifest, video_from_parts, write_synthetic_dataset,
    write_video, Manifest, ManifestVideo, VideoData, ANNOTATIONS_FILE, FRAMES_DIR, FRAMES_TTEN, MANIFEST_FILE,
    POSES_FILE, SPEC_FILE,
};
pub use infer::{
    classify_video, clip_windows, detect_video, evaluate_classification, evaluate_detection, window_predictions,
    ClassifyOutput, DetectOutput,
};
pub use train::{
    batch_tensors, epoch_samples, evaluate_samples, split_videos, train_videos, EpochLog, Sample, TrainReport,
    BEST_CHECKPOINT, FINAL_CHECKPOINT, TRAIN_LOG,
};
