//! Inputs shared by the benchmarks.

use strokenet::kernels::ConvGeometry;

/// Deterministic values in [-1, 1).
pub fn values(n: usize, seed: usize) -> Vec<f32> {
    (0..n).map(|i| ((i * 7919 + seed * 104729) % 2000) as f32 / 1000.0 - 1.0).collect()
}

/// The first and third convolutions of the desk network on a batch of 8,
/// and the first of the full network on a single clip.
pub fn conv_cases() -> Vec<(&'static str, ConvGeometry)> {
    let g = |batch, in_channels, out_channels, input| ConvGeometry {
        batch,
        in_channels,
        out_channels,
        input,
        kernel: [3, 3, 3],
        padding: [1, 1, 1],
    };
    vec![
        ("desk_conv1", g(8, 3, 4, [16, 32, 32])),
        ("desk_conv3", g(8, 8, 16, [8, 8, 8])),
        ("paper_conv1", g(1, 3, 32, [100, 120, 120])),
    ]
}
