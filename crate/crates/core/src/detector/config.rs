use serde::{Deserialize, Serialize};

use crate::atdh::HeadConfig;
use crate::error::{Error, Result};

/// Detector geometry and post-processing settings.
///
/// Backbone and neck widths are small desk-scale stand-ins, not a published
/// architecture.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DetectorConfig {
    /// `(height, width)` in pixels.
    pub input_size: (usize, usize),
    pub pyramid_strides: Vec<usize>,
    /// Per-level `(min, max]` bounds on the largest regression distance, in
    /// pixels. The last upper bound is infinite.
    #[serde(with = "open_ranges")]
    pub level_ranges: Vec<(f64, f64)>,
    /// Widths of the four backbone stages (strides 4, 8, 16, 32).
    pub backbone_widths: Vec<usize>,
    pub head: HeadConfig,
    pub score_threshold: f64,
    pub nms_iou: f64,
    pub max_detections: usize,
}

/// Strides produced by the four backbone stages.
pub const STAGE_STRIDES: [usize; 4] = [4, 8, 16, 32];

impl Default for DetectorConfig {
    fn default() -> Self {
        Self {
            input_size: (256, 256),
            pyramid_strides: vec![8, 16, 32],
            level_ranges: vec![(0.0, 64.0), (64.0, 128.0), (128.0, f64::INFINITY)],
            backbone_widths: vec![16, 32, 64, 96],
            head: HeadConfig::default(),
            score_threshold: 0.05,
            nms_iou: 0.6,
            max_detections: 100,
        }
    }
}

impl DetectorConfig {
    pub fn validate(&self) -> Result<()> {
        self.head.validate()?;
        let (h, w) = self.input_size;
        if h == 0 || w == 0 {
            return Err(Error::Config("input size must be positive".into()));
        }
        if self.pyramid_strides.is_empty() {
            return Err(Error::Config("at least one pyramid stride required".into()));
        }
        if self.pyramid_strides.windows(2).any(|p| p[0] >= p[1]) {
            return Err(Error::Config(format!(
                "pyramid strides must be strictly increasing, got {:?}",
                self.pyramid_strides
            )));
        }
        if let Some(s) = self.pyramid_strides.iter().find(|s| !STAGE_STRIDES.contains(s)) {
            return Err(Error::Config(format!(
                "stride {s} is not produced by the backbone (choose from {STAGE_STRIDES:?})"
            )));
        }
        if self.backbone_widths.len() != STAGE_STRIDES.len() || self.backbone_widths.contains(&0) {
            return Err(Error::Config(format!(
                "backbone needs {} positive widths, got {:?}",
                STAGE_STRIDES.len(),
                self.backbone_widths
            )));
        }
        if self.level_ranges.len() != self.pyramid_strides.len() {
            return Err(Error::Config("one level range per stride required".into()));
        }
        let contiguous = self.level_ranges.first().is_some_and(|r| r.0 == 0.0)
            && self.level_ranges.last().is_some_and(|r| r.1 == f64::INFINITY)
            && self.level_ranges.windows(2).all(|p| p[0].1 == p[1].0)
            && self.level_ranges.iter().all(|r| r.0 < r.1);
        if !contiguous {
            return Err(Error::Config(format!(
                "level ranges must be contiguous and cover (0, inf), got {:?}",
                self.level_ranges
            )));
        }
        let max_stride = *self.pyramid_strides.last().unwrap();
        if h % max_stride != 0 || w % max_stride != 0 {
            return Err(Error::Config(format!(
                "input {h}x{w} not divisible by stride {max_stride}"
            )));
        }
        if !(0.0..=1.0).contains(&self.score_threshold) || !(0.0..=1.0).contains(&self.nms_iou) {
            return Err(Error::Config("score_threshold and nms_iou must lie in [0, 1]".into()));
        }
        Ok(())
    }

    pub fn max_stride(&self) -> usize {
        self.pyramid_strides.last().copied().unwrap_or(1)
    }

    /// `(height, width)` of each pyramid level for an input of `size`.
    pub fn level_shapes(&self, size: (usize, usize)) -> Vec<(usize, usize)> {
        self.pyramid_strides.iter().map(|s| (size.0 / s, size.1 / s)).collect()
    }
}

/// Optimizer and schedule settings.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub steps: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
    pub momentum: f64,
    pub weight_decay: f64,
    pub warmup_steps: usize,
    /// Global gradient-norm cap; 0 disables clipping.
    pub grad_clip: f64,
    /// Random horizontal flips.
    pub flip: bool,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            steps: 500,
            batch_size: 2,
            learning_rate: 0.01,
            momentum: 0.9,
            weight_decay: 1e-4,
            warmup_steps: 50,
            grad_clip: 5.0,
            flip: true,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.steps == 0 || self.batch_size == 0 {
            return Err(Error::Config("steps and batch_size must be positive".into()));
        }
        if !(self.learning_rate > 0.0) || !(0.0..1.0).contains(&self.momentum) || self.weight_decay < 0.0 {
            return Err(Error::Config("invalid optimizer settings".into()));
        }
        Ok(())
    }
}

/// Serializes an infinite upper bound as `null`.
mod open_ranges {
    use serde::{Deserialize, Deserializer, Serialize, Serializer};

    pub fn serialize<S: Serializer>(v: &[(f64, f64)], s: S) -> Result<S::Ok, S::Error> {
        let out: Vec<(f64, Option<f64>)> = v.iter().map(|&(a, b)| (a, b.is_finite().then_some(b))).collect();
        out.serialize(s)
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<Vec<(f64, f64)>, D::Error> {
        let v: Vec<(f64, Option<f64>)> = Vec::deserialize(d)?;
        Ok(v.into_iter().map(|(a, b)| (a, b.unwrap_or(f64::INFINITY))).collect())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn default_is_valid() {
        DetectorConfig::default().validate().unwrap();
        TrainConfig::default().validate().unwrap();
    }

    #[test]
    fn rejects_bad_geometry() {
        let mut c = DetectorConfig::default();
        c.pyramid_strides = vec![16, 8, 32];
        assert!(c.validate().is_err());
        let mut c = DetectorConfig::default();
        c.input_size = (250, 250);
        assert!(c.validate().is_err());
        let mut c = DetectorConfig::default();
        c.level_ranges[1].0 = 60.0;
        assert!(c.validate().is_err());
    }

    #[test]
    fn json_keeps_open_range() {
        let c = DetectorConfig::default();
        let back: DetectorConfig = serde_json::from_str(&serde_json::to_string(&c).unwrap()).unwrap();
        assert_eq!(back, c);
    }
}
