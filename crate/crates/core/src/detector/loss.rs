use serde::{Deserialize, Serialize};

use super::targets::TargetMap;
use crate::atdh::HeadOutput;
use crate::error::{Error, Result};
use crate::nn::{sigmoid, softplus};

pub const FOCAL_ALPHA: f64 = 0.25;
pub const FOCAL_GAMMA: f64 = 2.0;
const MIN_IOU: f64 = 1e-12;

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct LossBundle {
    pub cls: f64,
    pub reg: f64,
    pub centerness: f64,
    pub total: f64,
}

impl LossBundle {
    pub fn is_finite(&self) -> bool {
        self.cls.is_finite() && self.reg.is_finite() && self.centerness.is_finite() && self.total.is_finite()
    }
}

/// Sigmoid focal loss of one logit and its derivative.
pub fn focal(z: f64, positive: bool) -> (f64, f64) {
    let p = sigmoid(z);
    let q = 1.0 - p;
    if positive {
        let ln_p = -softplus(-z);
        let w = q.powf(FOCAL_GAMMA);
        (-FOCAL_ALPHA * w * ln_p, FOCAL_ALPHA * w * (FOCAL_GAMMA * p * ln_p - q))
    } else {
        let ln_q = -softplus(z);
        let w = p.powf(FOCAL_GAMMA);
        (-(1.0 - FOCAL_ALPHA) * w * ln_q, (1.0 - FOCAL_ALPHA) * w * (p - FOCAL_GAMMA * q * ln_q))
    }
}

/// `-ln IoU` between two `(l, t, r, b)` boxes sharing an anchor point, and
/// its gradient with respect to the prediction.
pub fn iou_loss(pred: [f64; 4], target: [f64; 4]) -> (f64, [f64; 4]) {
    let [l, t, r, b] = pred;
    let [tl, tt, tr, tb] = target;
    let wi = l.min(tl) + r.min(tr);
    let hi = t.min(tt) + b.min(tb);
    let inter = wi * hi;
    let union = (l + r) * (t + b) + (tl + tr) * (tt + tb) - inter;
    let ratio = inter / union;
    if ratio < MIN_IOU {
        return (-MIN_IOU.ln(), [0.0; 4]);
    }
    let di = [
        if l < tl { hi } else { 0.0 },
        if t < tt { wi } else { 0.0 },
        if r < tr { hi } else { 0.0 },
        if b < tb { wi } else { 0.0 },
    ];
    let du_area = [t + b, l + r, t + b, l + r];
    let mut g = [0.0; 4];
    for k in 0..4 {
        g[k] = -di[k] / inter + (du_area[k] - di[k]) / union;
    }
    (-ratio.ln(), g)
}

fn binary_entropy(t: f64) -> f64 {
    let h = |x: f64| if x > 0.0 { -x * x.ln() } else { 0.0 };
    h(t) + h(1.0 - t)
}

/// Bernoulli KL divergence between target `t` and `sigmoid(z)`: the binary
/// cross-entropy minus its minimum, so it vanishes at the optimum.
pub fn centerness_loss(z: f64, t: f64) -> (f64, f64) {
    ((softplus(z) - t * z - binary_entropy(t)).max(0.0), sigmoid(z) - t)
}

fn check_shapes(outputs: &[HeadOutput], targets: &TargetMap, num_classes: usize) -> Result<()> {
    if outputs.len() != targets.levels.len() {
        return Err(Error::Config(format!(
            "{} output levels vs {} target levels",
            outputs.len(),
            targets.levels.len()
        )));
    }
    for (o, t) in outputs.iter().zip(&targets.levels) {
        if o.cls_logits.shape() != (num_classes, t.height, t.width)
            || o.reg.shape() != (4, t.height, t.width)
            || o.centerness.shape() != (1, t.height, t.width)
        {
            return Err(Error::Config("head output shape disagrees with targets".into()));
        }
        if !o.is_finite() {
            return Err(Error::Numeric("non-finite head output".into()));
        }
    }
    Ok(())
}

/// Losses and their gradients with respect to every head output.
pub fn loss_and_grad(outputs: &[HeadOutput], targets: &TargetMap) -> Result<(LossBundle, Vec<HeadOutput>)> {
    let k = outputs.first().map(|o| o.cls_logits.channels()).unwrap_or(0);
    check_shapes(outputs, targets, k)?;
    let norm = targets.positives().max(1) as f64;
    let mut bundle = LossBundle::default();
    let mut grads = Vec::with_capacity(outputs.len());

    for (o, t) in outputs.iter().zip(&targets.levels) {
        let mut g = o.zeros_like();
        let plane = t.height * t.width;
        for i in 0..plane {
            let target_class = t.cls[i].map(|c| c.index());
            for c in 0..k {
                let (l, d) = focal(o.cls_logits.data()[c * plane + i], target_class == Some(c));
                bundle.cls += l;
                g.cls_logits.data_mut()[c * plane + i] = d / norm;
            }
            if target_class.is_none() {
                continue;
            }
            let pred = [0, 1, 2, 3].map(|j| o.reg.data()[j * plane + i]);
            let (l, d) = iou_loss(pred, t.reg[i]);
            bundle.reg += l;
            for j in 0..4 {
                g.reg.data_mut()[j * plane + i] = d[j] / norm;
            }
            let (l, d) = centerness_loss(o.centerness.data()[i], t.centerness[i]);
            bundle.centerness += l;
            g.centerness.data_mut()[i] = d / norm;
        }
        grads.push(g);
    }
    bundle.cls /= norm;
    bundle.reg /= norm;
    bundle.centerness /= norm;
    bundle.total = bundle.cls + bundle.reg + bundle.centerness;
    if !bundle.is_finite() {
        return Err(Error::Numeric(format!("non-finite loss {bundle:?}")));
    }
    Ok((bundle, grads))
}

/// Focal classification, IoU regression and centerness losses, each
/// normalized by the number of positive locations (at least one).
pub fn compute_loss(outputs: &[HeadOutput], targets: &TargetMap) -> Result<LossBundle> {
    Ok(loss_and_grad(outputs, targets)?.0)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn fd(f: impl Fn(f64) -> f64, x: f64) -> f64 {
        let h = 1e-6;
        (f(x + h) - f(x - h)) / (2.0 * h)
    }

    #[test]
    fn focal_derivative() {
        for &z in &[-6.0, -1.3, 0.0, 0.7, 4.0] {
            for pos in [true, false] {
                let (_, d) = focal(z, pos);
                let n = fd(|v| focal(v, pos).0, z);
                assert!((d - n).abs() < 1e-7, "z={z} pos={pos}: {d} vs {n}");
            }
        }
    }

    #[test]
    fn iou_loss_derivative() {
        let target = [1.0, 2.0, 1.5, 0.5];
        let pred = [1.3, 1.6, 1.2, 0.9];
        let (_, g) = iou_loss(pred, target);
        for k in 0..4 {
            let n = fd(
                |v| {
                    let mut p = pred;
                    p[k] = v;
                    iou_loss(p, target).0
                },
                pred[k],
            );
            assert!((g[k] - n).abs() < 1e-7);
        }
        assert_eq!(iou_loss(target, target).0, 0.0);
    }

    #[test]
    fn centerness_loss_vanishes_at_target() {
        let t: f64 = 0.3;
        let z = (t / (1.0 - t)).ln();
        assert!(centerness_loss(z, t).0 < 1e-12);
        assert!(centerness_loss(z + 1.0, t).0 > 0.0);
        let n = fd(|v| centerness_loss(v, t).0, 0.4);
        assert!((centerness_loss(0.4, t).1 - n).abs() < 1e-7);
    }
}
