//! Minimal float64 tensor layers with hand-written backward passes.

mod conv;
mod norm;
mod ops;
mod params;
mod tensor;

pub use conv::{Conv2d, ConvCache};
pub use norm::{default_groups, GroupNorm, NormCache};
pub use ops::{add, relu, relu_backward, sigmoid, softplus, upsample_nearest, upsample_nearest_backward};
pub use params::{Grads, NamedArray, ParamSet};
pub use tensor::FeatureMap;

/// Conv, group norm and ReLU in sequence.
#[derive(Debug, Clone, PartialEq)]
pub struct ConvNormRelu {
    pub conv: Conv2d,
    pub norm: GroupNorm,
}

pub struct CnrCache {
    conv: ConvCache,
    norm: NormCache,
    out: FeatureMap,
}

impl ConvNormRelu {
    pub fn new(name: &str, in_c: usize, out_c: usize, kernel: usize, stride: usize) -> Self {
        Self {
            conv: Conv2d::new(format!("{name}.conv"), in_c, out_c, kernel, stride).without_bias(),
            norm: GroupNorm::new(format!("{name}.gn"), out_c),
        }
    }

    pub fn init(&self, params: &mut ParamSet, rng: &mut impl rand::Rng) -> crate::Result<()> {
        self.conv.init(params, rng, 0.0)?;
        self.norm.init(params)
    }

    pub fn forward(&self, params: &ParamSet, x: &FeatureMap) -> crate::Result<(FeatureMap, CnrCache)> {
        let (c, conv) = self.conv.forward(params, x)?;
        let (n, norm) = self.norm.forward(params, &c)?;
        let out = relu(&n);
        Ok((out.clone(), CnrCache { conv, norm, out }))
    }

    pub fn backward(&self, params: &ParamSet, cache: &CnrCache, dy: &FeatureMap, grads: &mut Grads) -> crate::Result<FeatureMap> {
        let d = relu_backward(&cache.out, dy);
        let d = self.norm.backward(params, &cache.norm, &d, grads)?;
        self.conv.backward(params, &cache.conv, &d, grads)
    }

    pub fn param_count(&self) -> usize {
        self.conv.param_count() + self.norm.param_count()
    }
}
