#![allow(dead_code)]

use fsd_core::atdh::HeadOutput;
use fsd_core::nn::{Grads, ParamSet};
use fsd_core::FeatureMap;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn random_map(rng: &mut ChaCha8Rng, c: usize, h: usize, w: usize, scale: f64) -> FeatureMap {
    let data = (0..c * h * w).map(|_| rng.random_range(-1.0..1.0) * scale).collect();
    FeatureMap::new(c, h, w, 8, data).unwrap()
}

pub fn dot(a: &FeatureMap, b: &FeatureMap) -> f64 {
    a.data().iter().zip(b.data()).map(|(x, y)| x * y).sum()
}

/// Weighted sum of every head output with weights `r`.
pub fn head_objective(out: &HeadOutput, r: &HeadOutput) -> f64 {
    dot(&out.cls_logits, &r.cls_logits) + dot(&out.reg, &r.reg) + dot(&out.centerness, &r.centerness)
}

pub fn random_like(rng: &mut ChaCha8Rng, out: &HeadOutput) -> HeadOutput {
    let like = |m: &FeatureMap, rng: &mut ChaCha8Rng| random_map(rng, m.channels(), m.height(), m.width(), 1.0);
    HeadOutput {
        cls_logits: like(&out.cls_logits, rng),
        reg: like(&out.reg, rng),
        centerness: like(&out.centerness, rng),
    }
}

/// `‖a − b‖ / max(‖a‖, ‖b‖, 1e-7)`; the floor absorbs round-off on
/// gradients that are exactly zero.
pub fn rel_err(a: &[f64], b: &[f64]) -> f64 {

    let diff: f64 = a.iter().zip(b).map(|(x, y)| (x - y).powi(2)).sum::<f64>().sqrt();
    let na = a.iter().map(|x| x * x).sum::<f64>().sqrt();
    let nb = b.iter().map(|x| x * x).sum::<f64>().sqrt();
    diff / na.max(nb).max(1e-7)
}

pub const FD_STEP: f64 = 1e-5;

/// Central differences of `f` with respect to every scalar parameter.
pub fn fd_params(params: &ParamSet, mut f: impl FnMut(&ParamSet) -> f64) -> Vec<Vec<f64>> {
    let mut p = params.clone();
    let mut out = Vec::new();
    for id in 0..p.len() {
        let mut g = Vec::with_capacity(p.by_id(id).data.len());
        for k in 0..p.by_id(id).data.len() {
            let orig = p.by_id(id).data[k];
            p.by_id_mut(id).data[k] = orig + FD_STEP;
            let up = f(&p);
            p.by_id_mut(id).data[k] = orig - FD_STEP;
            let down = f(&p);
            p.by_id_mut(id).data[k] = orig;
            g.push((up - down) / (2.0 * FD_STEP));
        }
        out.push(g);
    }
    out
}

pub fn flatten_grads(g: &Grads) -> Vec<f64> {
    g.iter().flat_map(|s| s.iter().copied()).collect()
}
