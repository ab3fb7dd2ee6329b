//! The two-stream network and its checkpoint format.

mod checkpoint;
mod config;
mod net;

pub use checkpoint::{checkpoint_bytes, load_checkpoint, read_checkpoint, save_checkpoint, CHECKPOINT_MAGIC};
pub use config::{Fusion, InputSize, ModelConfig, PoolOrder, Streams};
pub use net::{fuse_outputs, AttentionBlock, Bound, TwoStreamNet};
