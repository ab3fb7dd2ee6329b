//! Pose ingestion and skeleton rendering.
//!
//! Keypoints arrive as JSON Lines (one object per frame, COCO keypoint
//! order) and are drawn either on a black canvas (Pose) or over the source
//! RGB frame (PRGB).

mod keypoints;
mod render;

pub use keypoints::{parse_keypoint_stream, read_keypoint_stream, write_keypoint_stream, Keypoint, PersonPose, PoseFrame};
pub use render::{compose_frame, draw_line, rasterize_skeleton, RenderMode, SkeletonEdge, SkeletonSpec};

/// Number of COCO body keypoints.
pub const NUM_KEYPOINTS: usize = 17;

/// COCO keypoint names, in index order.
pub const COCO_KEYPOINTS: [&str; NUM_KEYPOINTS] = [
    "nose",
    "left_eye",
    "right_eye",
    "left_ear",
    "right_ear",
    "left_shoulder",
    "right_shoulder",
    "left_elbow",
    "right_elbow",
    "left_wrist",
    "right_wrist",
    "left_hip",
    "right_hip",
    "left_knee",
    "right_knee",
    "left_ankle",
    "right_ankle",
];
