//! Reference checks shared by the test suites and the acceptance run.
//! Every check panics with a description on the first violation.
#![allow(dead_code)]

pub mod fusion;
pub mod gradients;
pub mod kernels;
pub mod metrics;
