//! Two-stream pose-augmented 3D CNN for fine-grained stroke classification
//! and temporal stroke detection.
//!
//! The crate is organised bottom-up:
//!
//! * [`tensor`], [`kernels`], [`autodiff`], [`optim`], [`gradcheck`], [`tten`]:
//!   a small dense tensor engine with reverse-mode differentiation.
//! * [`pose`]: keypoint ingestion and skeleton rendering (Pose / PRGB frames).
//! * [`model`]: the two-stream network, fusion heads and checkpoints.
//! * [`data`]: frame sequences, annotations, window sampling, synthetic data.
//! * [`decision`]: window aggregation, segment extraction, IoU and mAP.
//! * [`pipeline`]: training and inference drivers shared by the CLI.

pub mod autodiff;
pub mod data;
pub mod decision;
pub mod error;
pub mod gradcheck;
pub mod kernels;
pub mod model;
pub mod optim;
pub mod pipeline;
pub mod pose;
pub mod tensor;
pub mod tten;

pub use autodiff::{Tape, Var};
pub use error::{Error, Result};
pub use optim::{sgd_step, OptimizerConfig, Parameter};
pub use tensor::{DType, Element, Tensor};
