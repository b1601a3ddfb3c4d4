//! Overlap and burning-intensity scores between a predicted and a
//! ground-truth box.

use serde::{Deserialize, Serialize};

use super::bbox::BBox;
use crate::error::{Error, Result};

/// Area of a box in square pixels. Always strictly positive for a valid box.
pub fn area(b: &BBox) -> f64 {
    b.area()
}

/// Intersection over union through corner form. Touching edges give an empty
/// intersection.
pub fn iou(a: &BBox, b: &BBox) -> f64 {
    let [ax1, ay1, ax2, ay2] = a.corners();
    let [bx1, by1, bx2, by2] = b.corners();
    let iw = (ax2.min(bx2) - ax1.max(bx1)).max(0.0);
    let ih = (ay2.min(by2) - ay1.max(by1)).max(0.0);
    let inter = iw * ih;
    if inter <= 0.0 {
        return 0.0;
    }
    let union = a.area() + b.area() - inter;
    (inter / union).clamp(0.0, 1.0)
}

/// Area difference normalization: `1 - |A_d - A_g| / max(A_d, A_g)`.
pub fn area_diff_norm(a: &BBox, b: &BBox) -> f64 {
    let (ad, ag) = (a.area(), b.area());
    let hi = ad.max(ag);
    (1.0 - (ad - ag).abs() / hi).clamp(0.0, 1.0)
}

/// Weights of the burning-intensity combination: `w1` on the area term and
/// `w2` on the IoU term.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "(f64, f64)", into = "(f64, f64)")]
pub struct BIWeights {
    w1: f64,
    w2: f64,
}

impl BIWeights {
    pub const SUM_TOLERANCE: f64 = 1e-12;

    pub fn new(w1: f64, w2: f64) -> Result<Self> {
        if !(w1.is_finite() && w2.is_finite()) || w1 < 0.0 || w2 < 0.0 {
            return Err(Error::InvalidWeights(format!(
                "weights must be finite and non-negative, got ({w1}, {w2})"
            )));
        }
        if (w1 + w2 - 1.0).abs() > Self::SUM_TOLERANCE {
            return Err(Error::InvalidWeights(format!(
                "weights must sum to 1, got {w1} + {w2} = {}",
                w1 + w2
            )));
        }
        Ok(Self { w1, w2 })
    }

    pub fn area_weight(&self) -> f64 {
        self.w1
    }

    pub fn iou_weight(&self) -> f64 {
        self.w2
    }
}

impl Default for BIWeights {
    fn default() -> Self {
        Self { w1: 0.5, w2: 0.5 }
    }
}

impl TryFrom<(f64, f64)> for BIWeights {
    type Error = Error;

    fn try_from((w1, w2): (f64, f64)) -> Result<Self> {
        BIWeights::new(w1, w2)
    }
}

impl From<BIWeights> for (f64, f64) {
    fn from(w: BIWeights) -> Self {
        (w.w1, w.w2)
    }
}

/// Relative burning intensity of a prediction against its ground truth.
pub fn burning_intensity(pred: &BBox, gt: &BBox, weights: BIWeights) -> f64 {
    let v = weights.w1 * area_diff_norm(pred, gt) + weights.w2 * iou(pred, gt);
    v.clamp(0.0, 1.0)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn b(cx: f64, cy: f64, w: f64, h: f64) -> BBox {
        BBox::new(cx, cy, w, h).unwrap()
    }

    #[test]
    fn area_examples() {
        assert_eq!(area(&b(0.0, 0.0, 2.0, 3.0)), 6.0);
        assert_eq!(area(&b(5.0, 5.0, 1.0, 1.0)), 1.0);
        assert!((area(&b(1.5, 2.0, 0.4, 2.5)) - 1.0).abs() < 1e-15);
    }

    #[test]
    fn iou_examples() {
        let a = b(1.0, 1.0, 2.0, 2.0);
        assert_eq!(iou(&a, &a), 1.0);
        assert_eq!(iou(&a, &b(10.0, 10.0, 2.0, 2.0)), 0.0);
        assert!((iou(&a, &b(2.0, 1.0, 2.0, 2.0)) - 1.0 / 3.0).abs() < 1e-15);
    }

    #[test]
    fn touching_edges_do_not_overlap() {
        assert_eq!(iou(&b(1.0, 1.0, 2.0, 2.0), &b(3.0, 1.0, 2.0, 2.0)), 0.0);
    }

    #[test]
    fn area_diff_examples() {
        assert_eq!(area_diff_norm(&b(0.0, 0.0, 2.0, 2.0), &b(50.0, 9.0, 1.0, 4.0)), 1.0);
        assert_eq!(area_diff_norm(&b(0.0, 0.0, 1.0, 2.0), &b(0.0, 0.0, 2.0, 2.0)), 0.5);
        assert!((area_diff_norm(&b(0.0, 0.0, 1.0, 1.0), &b(0.0, 0.0, 10.0, 10.0)) - 0.01).abs() < 1e-15);
    }

    #[test]
    fn bi_examples() {
        let half = BIWeights::default();
        let a = b(1.0, 1.0, 2.0, 2.0);
        assert_eq!(burning_intensity(&a, &a, half), 1.0);
        assert_eq!(burning_intensity(&a, &b(20.0, 1.0, 2.0, 2.0), half), 0.5);
        let shifted = b(2.0, 1.0, 2.0, 2.0);
        assert!((burning_intensity(&a, &shifted, half) - 2.0 / 3.0).abs() < 1e-12);
        let area_only = BIWeights::new(1.0, 0.0).unwrap();
        assert_eq!(burning_intensity(&a, &shifted, area_only), 1.0);
    }

    #[test]
    fn weights_validation() {
        assert!(BIWeights::new(0.6, 0.6).is_err());
        assert!(BIWeights::new(-0.5, 1.5).is_err());
        assert!(BIWeights::new(f64::NAN, 1.0).is_err());
        assert!(BIWeights::new(0.25, 0.75).is_ok());
    }
}
