use serde::{Deserialize, Serialize};

use super::config::DetectorConfig;
use super::model::Detector;
use crate::error::Result;
use crate::nn::ParamSet;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelStats {
    pub param_count: usize,
    /// Convolution multiply-accumulates per forward pass, keyed by input
    /// `(height, width)`.
    pub mult_adds: Vec<((usize, usize), u64)>,
}

impl ModelStats {
    pub fn params_millions(&self) -> f64 {
        self.param_count as f64 / 1e6
    }
}

/// Exact parameter count of `params` and closed-form convolution cost of
/// the configured architecture at each input size.
pub fn model_stats(config: &DetectorConfig, params: &ParamSet, input_sizes: &[(usize, usize)]) -> Result<ModelStats> {
    let detector = Detector::new(config)?;
    let plan = detector.conv_plan();
    let mult_adds = input_sizes
        .iter()
        .map(|&(h, w)| {
            let total = plan.iter().map(|(conv, stride)| conv.mult_adds(h / stride, w / stride)).sum();
            ((h, w), total)
        })
        .collect();
    Ok(ModelStats {
        param_count: params.scalar_count(),
        mult_adds,
    })
}
