use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::kernels::pooled_extent;

/// Late-fusion rule combining the two per-stream probability vectors.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Fusion {
    /// `softmax(p_a + p_b)`
    Summed,
    /// `softmax(w1·p_a + w2·p_b)`
    Weighted { w1: f64, w2: f64 },
    /// `softmax(linear_{2K→K}([p_a ; p_b]))`
    Concat,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Streams {
    One,
    Two,
}

/// Axis order in which `pool_sizes` triples are written.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum PoolOrder {
    /// `(width, height, time)`
    Wht,
    /// `(time, height, width)`
    Thw,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct InputSize {
    pub width: usize,
    pub height: usize,
    pub frames: usize,
    pub channels: usize,
}

/// Architecture hyperparameters of one [`TwoStreamNet`](super::TwoStreamNet).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelConfig {
    pub filters: Vec<usize>,
    /// Convolution kernel `(kT, kH, kW)`; padding is `k / 2` per axis.
    pub kernel: [usize; 3],
    pub pool_sizes: Vec<[usize; 3]>,
    pub pool_order: PoolOrder,
    pub input_size: InputSize,
    pub hidden_dim: usize,
    pub num_classes: usize,
    pub fusion: Fusion,
    pub streams: Streams,
}

impl Default for ModelConfig {
    fn default() -> Self {
        Self::paper(21)
    }
}

impl ModelConfig {
    /// Full-size network on 120×120×100 clips.
    pub fn paper(num_classes: usize) -> Self {
        ModelConfig {
            filters: vec![32, 64, 128, 256, 512],
            kernel: [3, 3, 3],
            pool_sizes: vec![[4, 3, 2], [4, 3, 2], [2, 2, 2], [2, 2, 2], [2, 2, 2]],
            pool_order: PoolOrder::Wht,
            input_size: InputSize {
                width: 120,
                height: 120,
                frames: 100,
                channels: 3,
            },
            hidden_dim: 512,
            num_classes,
            fusion: Fusion::Summed,
            streams: Streams::Two,
        }
    }

    /// Desk-scale network on 32×32×16 clips. The first pool keeps every
    /// frame so that time is not collapsed before the last level.
    pub fn desk(num_classes: usize) -> Self {
        ModelConfig {
            filters: vec![4, 8, 16, 32, 64],
            pool_sizes: vec![[2, 2, 1], [2, 2, 2], [2, 2, 2], [2, 2, 2], [2, 2, 2]],
            input_size: InputSize {
                width: 32,
                height: 32,
                frames: 16,
                channels: 3,
            },
            hidden_dim: 256,
            ..Self::paper(num_classes)
        }
    }

    /// Minimal network used by gradient checks: 8×8×4 input, 2 filters per level.
    pub fn tiny(num_classes: usize) -> Self {
        ModelConfig {
            filters: vec![2; 5],
            pool_sizes: vec![[2, 2, 2]; 5],
            input_size: InputSize {
                width: 8,
                height: 8,
                frames: 4,
                channels: 3,
            },
            hidden_dim: 4,
            ..Self::paper(num_classes)
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.filters.is_empty() || self.filters.contains(&0) {
            return Err(Error::config("filters", "need at least one level, all counts positive"));
        }
        if self.filters.len() != self.pool_sizes.len() {
            return Err(Error::config(
                "pool_sizes",
                format!("{} pool sizes for {} filter levels", self.pool_sizes.len(), self.filters.len()),
            ));
        }
        if self.pool_sizes.iter().any(|p| p.contains(&0)) {
            return Err(Error::config("pool_sizes", "pool extents must be >= 1"));
        }
        if self.kernel.iter().any(|&k| k % 2 == 0) {
            return Err(Error::config("kernel", "kernel extents must be odd"));
        }
        let s = &self.input_size;
        if s.width == 0 || s.height == 0 || s.frames == 0 {
            return Err(Error::config("input_size", "extents must be positive"));
        }
        if s.channels != 3 {
            return Err(Error::config("input_size.channels", "clips are RGB, channels must be 3"));
        }
        if self.hidden_dim == 0 {
            return Err(Error::config("hidden_dim", "must be positive"));
        }
        if self.num_classes < 2 {
            return Err(Error::config("num_classes", "need at least 2 classes"));
        }
        if let Fusion::Weighted { w1, w2 } = self.fusion {
            if !(w1.is_finite() && w2.is_finite()) {
                return Err(Error::config("fusion", "weights must be finite"));
            }
        }
        Ok(())
    }

    /// Pool extents of level `i` in kernel order `(T, H, W)`.
    pub fn pool_thw(&self, i: usize) -> [usize; 3] {
        let p = self.pool_sizes[i];
        match self.pool_order {
            PoolOrder::Wht => [p[2], p[1], p[0]],
            PoolOrder::Thw => p,
        }
    }

    pub fn padding(&self) -> [usize; 3] {
        [self.kernel[0] / 2, self.kernel[1] / 2, self.kernel[2] / 2]
    }

    /// `(T, H, W)` after every level, starting with the input.
    pub fn level_extents(&self) -> Vec<[usize; 3]> {
        let s = &self.input_size;
        let mut cur = [s.frames, s.height, s.width];
        let mut out = vec![cur];
        for i in 0..self.pool_sizes.len() {
            let p = self.pool_thw(i);
            cur = [
                pooled_extent(cur[0], p[0]),
                pooled_extent(cur[1], p[1]),
                pooled_extent(cur[2], p[2]),
            ];
            out.push(cur);
        }
        out
    }

    /// Length of the flattened feature fed to the first linear layer.
    pub fn feature_len(&self) -> usize {
        let last = *self.level_extents().last().unwrap();
        self.filters.last().copied().unwrap_or(0) * last.iter().product::<usize>()
    }

    /// Expected clip shape `N×3×T×H×W` for batch size `n`.
    pub fn clip_shape(&self, n: usize) -> [usize; 5] {
        let s = &self.input_size;
        [n, s.channels, s.frames, s.height, s.width]
    }
}
