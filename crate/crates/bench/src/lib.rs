//! Fixtures shared by the benchmarks.

use fsd_core::boxmetrics::{BBox, Category, LabeledBox};
use fsd_core::FeatureMap;

/// Deterministic pseudo-random sequence in `[0, 1)`.
pub fn lcg(n: usize, mut state: u64) -> Vec<f64> {
    (0..n)
        .map(|_| {
            state = state.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
            (state >> 11) as f64 / (1u64 << 53) as f64
        })
        .collect()
}

pub fn boxes(n: usize, seed: u64) -> Vec<BBox> {
    lcg(4 * n, seed)
        .chunks(4)
        .map(|v| BBox::new(v[0] * 200.0, v[1] * 200.0, 4.0 + v[2] * 60.0, 4.0 + v[3] * 60.0).unwrap())
        .collect()
}

pub fn detections(n: usize, seed: u64) -> Vec<LabeledBox> {
    let conf = lcg(n, seed ^ 0xabc);
    boxes(n, seed)
        .into_iter()
        .zip(conf)
        .enumerate()
        .map(|(i, (b, c))| {
            let cat = if i % 2 == 0 { Category::Fire } else { Category::Smoke };
            LabeledBox::detection("img", cat, b, c).unwrap()
        })
        .collect()
}

pub fn feature_map(c: usize, h: usize, w: usize, seed: u64) -> FeatureMap {
    FeatureMap::new(c, h, w, 8, lcg(c * h * w, seed).iter().map(|v| v - 0.5).collect()).unwrap()
}
