use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Axis-aligned box in center format, measured in pixels.
///
/// Construction rejects non-finite fields and non-positive sizes, so every
/// `BBox` in circulation has a strictly positive area.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "[f64; 4]", into = "[f64; 4]")]
pub struct BBox {
    cx: f64,
    cy: f64,
    w: f64,
    h: f64,
}

impl BBox {
    pub fn new(cx: f64, cy: f64, w: f64, h: f64) -> Result<Self> {
        if !(cx.is_finite() && cy.is_finite() && w.is_finite() && h.is_finite()) {
            return Err(Error::InvalidBox(format!(
                "non-finite field in ({cx}, {cy}, {w}, {h})"
            )));
        }
        if w <= 0.0 || h <= 0.0 {
            return Err(Error::InvalidBox(format!(
                "non-positive size w={w} h={h}"
            )));
        }
        Ok(Self { cx, cy, w, h })
    }

    pub fn from_corners(x1: f64, y1: f64, x2: f64, y2: f64) -> Result<Self> {
        Self::new((x1 + x2) * 0.5, (y1 + y2) * 0.5, x2 - x1, y2 - y1)
    }

    pub fn cx(&self) -> f64 {
        self.cx
    }

    pub fn cy(&self) -> f64 {
        self.cy
    }

    pub fn w(&self) -> f64 {
        self.w
    }

    pub fn h(&self) -> f64 {
        self.h
    }

    /// `(x1, y1, x2, y2)`.
    pub fn corners(&self) -> [f64; 4] {
        let hw = self.w * 0.5;
        let hh = self.h * 0.5;
        [self.cx - hw, self.cy - hh, self.cx + hw, self.cy + hh]
    }

    pub fn area(&self) -> f64 {
        self.w * self.h
    }

    pub fn translate(&self, dx: f64, dy: f64) -> Result<Self> {
        Self::new(self.cx + dx, self.cy + dy, self.w, self.h)
    }

    pub fn scale(&self, s: f64) -> Result<Self> {
        Self::new(self.cx * s, self.cy * s, self.w * s, self.h * s)
    }

    /// Clip to `[0, width] x [0, height]`; `None` when nothing remains.
    pub fn clip(&self, width: f64, height: f64) -> Option<Self> {
        let [x1, y1, x2, y2] = self.corners();
        let (x1, y1) = (x1.max(0.0), y1.max(0.0));
        let (x2, y2) = (x2.min(width), y2.min(height));
        Self::from_corners(x1, y1, x2, y2).ok()
    }

    pub fn contains_point(&self, x: f64, y: f64) -> bool {
        let [x1, y1, x2, y2] = self.corners();
        x > x1 && x < x2 && y > y1 && y < y2
    }
}

impl TryFrom<[f64; 4]> for BBox {
    type Error = Error;

    fn try_from(v: [f64; 4]) -> Result<Self> {
        BBox::new(v[0], v[1], v[2], v[3])
    }
}

impl From<BBox> for [f64; 4] {
    fn from(b: BBox) -> Self {
        [b.cx, b.cy, b.w, b.h]
    }
}

/// Detection category. The toolkit is two-class by construction.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Category {
    Fire,
    Smoke,
}

impl Category {
    pub const ALL: [Category; 2] = [Category::Fire, Category::Smoke];

    pub fn index(self) -> usize {
        match self {
            Category::Fire => 0,
            Category::Smoke => 1,
        }
    }

    pub fn from_index(i: usize) -> Option<Self> {
        Self::ALL.get(i).copied()
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Category::Fire => "fire",
            Category::Smoke => "smoke",
        }
    }
}

impl fmt::Display for Category {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Category {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim() {
            "fire" => Ok(Category::Fire),
            "smoke" => Ok(Category::Smoke),
            other => Err(Error::Schema(format!("unknown class {other:?}"))),
        }
    }
}

/// A box with a class label, tied to one image. Ground truth carries no
/// confidence; detections carry one in `[0, 1]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LabeledBox {
    pub bbox: BBox,
    pub category: Category,
    pub confidence: Option<f64>,
    pub image_id: String,
}

impl LabeledBox {
    pub fn ground_truth(image_id: impl Into<String>, category: Category, bbox: BBox) -> Self {
        Self {
            bbox,
            category,
            confidence: None,
            image_id: image_id.into(),
        }
    }

    pub fn detection(
        image_id: impl Into<String>,
        category: Category,
        bbox: BBox,
        confidence: f64,
    ) -> Result<Self> {
        if !(0.0..=1.0).contains(&confidence) {
            return Err(Error::Protocol(format!(
                "confidence {confidence} outside [0, 1]"
            )));
        }
        Ok(Self {
            bbox,
            category,
            confidence: Some(confidence),
            image_id: image_id.into(),
        })
    }

    pub fn score(&self) -> f64 {
        self.confidence.unwrap_or(1.0)
    }
}
