//! Backbone, feature fusion neck and head assembled into one detector.

use rand::Rng;

use super::config::{DetectorConfig, STAGE_STRIDES};
use crate::atdh::{Head, HeadCache, HeadOutput};
use crate::error::{Error, Result};
use crate::nn::{
    relu, relu_backward, upsample_nearest, upsample_nearest_backward, CnrCache, Conv2d, ConvCache, ConvNormRelu,
    FeatureMap, GroupNorm, Grads, NormCache, ParamSet,
};

/// Two 3x3 convolutions with an identity skip.
#[derive(Debug, Clone, PartialEq)]
struct ResBlock {
    first: ConvNormRelu,
    second: Conv2d,
    norm: GroupNorm,
}

struct ResCache {
    first: CnrCache,
    second: ConvCache,
    norm: NormCache,
    out: FeatureMap,
}

impl ResBlock {
    fn new(name: &str, c: usize) -> Self {
        Self {
            first: ConvNormRelu::new(&format!("{name}.a"), c, c, 3, 1),
            second: Conv2d::new(format!("{name}.b.conv"), c, c, 3, 1).without_bias(),
            norm: GroupNorm::new(format!("{name}.b.gn"), c),
        }
    }

    fn init(&self, params: &mut ParamSet, rng: &mut impl Rng) -> Result<()> {
        self.first.init(params, rng)?;
        self.second.init(params, rng, 0.0)?;
        self.norm.init(params)
    }

    fn forward(&self, params: &ParamSet, x: &FeatureMap) -> Result<(FeatureMap, ResCache)> {
        let (a, first) = self.first.forward(params, x)?;
        let (b, second) = self.second.forward(params, &a)?;
        let (mut n, norm) = self.norm.forward(params, &b)?;
        n.add_assign(x);
        let out = relu(&n);
        Ok((out.clone(), ResCache { first, second, norm, out }))
    }

    fn backward(&self, params: &ParamSet, cache: &ResCache, dy: &FeatureMap, grads: &mut Grads) -> Result<FeatureMap> {
        let d = relu_backward(&cache.out, dy);
        let dn = self.norm.backward(params, &cache.norm, &d, grads)?;
        let db = self.second.backward(params, &cache.second, &dn, grads)?;
        let mut dx = self.first.backward(params, &cache.first, &db, grads)?;
        dx.add_assign(&d);
        Ok(dx)
    }

    fn convs(&self) -> [&Conv2d; 2] {
        [&self.first.conv, &self.second]
    }
}

#[derive(Debug, Clone, PartialEq)]
struct Stage {
    down: ConvNormRelu,
    block: ResBlock,
}

/// Stride-2 stem followed by four downsampling residual stages.
#[derive(Debug, Clone, PartialEq)]
pub struct Backbone {
    stem: ConvNormRelu,
    stages: Vec<Stage>,
}

pub struct BackboneCache {
    stem: CnrCache,
    stages: Vec<(CnrCache, ResCache)>,
}

impl Backbone {
    pub fn new(widths: &[usize]) -> Self {
        let stem = ConvNormRelu::new("backbone.stem", 3, widths[0], 3, 2);
        let mut prev = widths[0];
        let stages = widths
            .iter()
            .enumerate()
            .map(|(i, &w)| {
                let s = Stage {
                    down: ConvNormRelu::new(&format!("backbone.stage{i}.down"), prev, w, 3, 2),
                    block: ResBlock::new(&format!("backbone.stage{i}.res"), w),
                };
                prev = w;
                s
            })
            .collect();
        Self { stem, stages }
    }

    fn init(&self, params: &mut ParamSet, rng: &mut impl Rng) -> Result<()> {
        self.stem.init(params, rng)?;
        for s in &self.stages {
            s.down.init(params, rng)?;
            s.block.init(params, rng)?;
        }
        Ok(())
    }

    /// Outputs of all four stages, fine to coarse.
    fn forward(&self, params: &ParamSet, image: &FeatureMap) -> Result<(Vec<FeatureMap>, BackboneCache)> {
        let (mut h, stem) = self.stem.forward(params, image)?;
        let mut outs = Vec::with_capacity(self.stages.len());
        let mut caches = Vec::with_capacity(self.stages.len());
        for s in &self.stages {
            let (d, dc) = s.down.forward(params, &h)?;
            let (r, rc) = s.block.forward(params, &d)?;
            caches.push((dc, rc));
            outs.push(r.clone());
            h = r;
        }
        Ok((outs, BackboneCache { stem, stages: caches }))
    }

    /// `d_outs[i]` is the gradient at stage `i` output (`None` when unused).
    fn backward(&self, params: &ParamSet, cache: &BackboneCache, d_outs: &[Option<FeatureMap>], grads: &mut Grads) -> Result<()> {
        let mut carry: Option<FeatureMap> = None;
        for (i, s) in self.stages.iter().enumerate().rev() {
            let mut d = match (&d_outs[i], carry.take()) {
                (Some(a), Some(mut b)) => {
                    b.add_assign(a);
                    b
                }
                (Some(a), None) => a.clone(),
                (None, Some(b)) => b,
                (None, None) => continue,
            };
            let (dc, rc) = &cache.stages[i];
            d = s.block.backward(params, rc, &d, grads)?;
            carry = Some(s.down.backward(params, dc, &d, grads)?);
        }
        if let Some(d) = carry {
            self.stem.backward(params, &cache.stem, &d, grads)?;
        }
        Ok(())
    }

    fn convs(&self) -> Vec<(&Conv2d, usize)> {
        let mut v = vec![(&self.stem.conv, 1)];
        let mut stride = 2;
        for s in &self.stages {
            v.push((&s.down.conv, stride));
            stride *= 2;
            v.extend(s.block.convs().into_iter().map(|c| (c, stride)));
        }
        v
    }
}

/// Top-down feature fusion: 1x1 laterals to a common width, nearest
/// upsample-and-add from coarse to fine, then a 3x3 smoothing conv per level.
#[derive(Debug, Clone, PartialEq)]
pub struct Neck {
    laterals: Vec<Conv2d>,
    smooth: Vec<Conv2d>,
}

pub struct NeckCache {
    laterals: Vec<ConvCache>,
    smooth: Vec<ConvCache>,
    merged: Vec<FeatureMap>,
}

impl Neck {
    pub fn new(in_widths: &[usize], width: usize) -> Self {
        Self {
            laterals: in_widths
                .iter()
                .enumerate()
                .map(|(i, &c)| Conv2d::new(format!("neck.lateral{i}"), c, width, 1, 1))
                .collect(),
            smooth: (0..in_widths.len())
                .map(|i| Conv2d::new(format!("neck.smooth{i}"), width, width, 3, 1))
                .collect(),
        }
    }

    pub fn init(&self, params: &mut ParamSet, rng: &mut impl Rng) -> Result<()> {
        self.laterals
            .iter()
            .chain(&self.smooth)
            .try_for_each(|c| c.init(params, rng, 0.0))
    }

    pub fn forward(&self, params: &ParamSet, maps: &[FeatureMap]) -> Result<(Vec<FeatureMap>, NeckCache)> {
        if maps.len() != self.laterals.len() {
            return Err(Error::Config(format!(
                "neck built for {} levels, got {}",
                self.laterals.len(),
                maps.len()
            )));
        }
        let mut lat = Vec::with_capacity(maps.len());
        let mut lat_cache = Vec::with_capacity(maps.len());
        for (m, conv) in maps.iter().zip(&self.laterals) {
            let (y, c) = conv.forward(params, m)?;
            lat.push(y);
            lat_cache.push(c);
        }
        let mut merged: Vec<FeatureMap> = lat.clone();
        for i in (0..merged.len().saturating_sub(1)).rev() {
            let (h, w, s) = (merged[i].height(), merged[i].width(), merged[i].stride);
            let up = upsample_nearest(&merged[i + 1], h, w, s)?;
            merged[i].add_assign(&up);
        }
        let mut outs = Vec::with_capacity(maps.len());
        let mut smooth_cache = Vec::with_capacity(maps.len());
        for (m, conv) in merged.iter().zip(&self.smooth) {
            let (y, c) = conv.forward(params, m)?;
            outs.push(y);
            smooth_cache.push(c);
        }
        Ok((
            outs,
            NeckCache {
                laterals: lat_cache,
                smooth: smooth_cache,
                merged,
            },
        ))
    }

    pub fn backward(&self, params: &ParamSet, cache: &NeckCache, d_outs: &[FeatureMap], grads: &mut Grads) -> Result<Vec<FeatureMap>> {
        let n = d_outs.len();
        let mut d_merged = Vec::with_capacity(n);
        for ((conv, c), d) in self.smooth.iter().zip(&cache.smooth).zip(d_outs) {
            d_merged.push(conv.backward(params, c, d, grads)?);
        }
        // merged[i] = lat[i] + up(merged[i+1]): push gradients coarse-ward
        for i in 0..n.saturating_sub(1) {
            let d_up = upsample_nearest_backward(&cache.merged[i + 1], &d_merged[i])?;
            d_merged[i + 1].add_assign(&d_up);
        }
        let mut d_in = Vec::with_capacity(n);
        for ((conv, c), d) in self.laterals.iter().zip(&cache.laterals).zip(&d_merged) {
            d_in.push(conv.backward(params, c, d, grads)?);
        }
        Ok(d_in)
    }

    fn convs(&self) -> impl Iterator<Item = (usize, &Conv2d)> {
        self.laterals.iter().enumerate().chain(self.smooth.iter().enumerate())
    }
}

/// The complete detector: backbone, neck and a head shared across levels.
#[derive(Debug, Clone, PartialEq)]
pub struct Detector {
    pub config: DetectorConfig,
    backbone: Backbone,
    neck: Neck,
    head: Head,
    /// Backbone stage index feeding each pyramid level.
    level_stage: Vec<usize>,
}

pub struct ForwardCache {
    backbone: BackboneCache,
    neck: NeckCache,
    heads: Vec<HeadCache>,
}

impl ForwardCache {
    /// Post-attention classification features for `level`.
    pub fn head_features(&self, level: usize) -> Option<&FeatureMap> {
        self.heads.get(level).map(|h| &h.cls_features)
    }
}

impl Detector {
    pub fn new(config: &DetectorConfig) -> Result<Self> {
        config.validate()?;
        let level_stage: Vec<usize> = config
            .pyramid_strides
            .iter()
            .map(|s| STAGE_STRIDES.iter().position(|t| t == s).unwrap())
            .collect();
        let in_widths: Vec<usize> = level_stage.iter().map(|&i| config.backbone_widths[i]).collect();
        Ok(Self {
            config: config.clone(),
            backbone: Backbone::new(&config.backbone_widths),
            neck: Neck::new(&in_widths, config.head.channels),
            head: Head::new(&config.head, config.pyramid_strides.len()),
            level_stage,
        })
    }

    pub fn levels(&self) -> usize {
        self.level_stage.len()
    }

    pub fn init_params(&self, seed: u64) -> Result<ParamSet> {
        let mut params = ParamSet::new();
        let mut rng = crate::util::rng_for(seed, "detector-init");
        self.backbone.init(&mut params, &mut rng)?;
        self.neck.init(&mut params, &mut rng)?;
        self.head.init(&mut params, &mut rng)?;
        Ok(params)
    }

    fn check_image(&self, image: &FeatureMap) -> Result<()> {
        let s = self.config.max_stride();
        if image.channels() != 3 {
            return Err(Error::Config(format!("expected 3-channel image, got {}", image.channels())));
        }
        if image.height() % s != 0 || image.width() % s != 0 {
            return Err(Error::Config(format!(
                "image {}x{} not divisible by stride {s}",
                image.height(),
                image.width()
            )));
        }
        Ok(())
    }

    /// One feature map per configured stride, straight from the backbone.
    pub fn backbone_forward(&self, params: &ParamSet, image: &FeatureMap) -> Result<Vec<FeatureMap>> {
        self.check_image(image)?;
        let (outs, _) = self.backbone.forward(params, image)?;
        Ok(self.level_stage.iter().map(|&i| outs[i].clone()).collect())
    }

    pub fn fuse_features(&self, params: &ParamSet, maps: &[FeatureMap]) -> Result<Vec<FeatureMap>> {
        Ok(self.neck.forward(params, maps)?.0)
    }

    pub fn forward(&self, params: &ParamSet, image: &FeatureMap) -> Result<(Vec<HeadOutput>, ForwardCache)> {
        self.check_image(image)?;
        let (stage_outs, backbone) = self.backbone.forward(params, image)?;
        let level_in: Vec<FeatureMap> = self.level_stage.iter().map(|&i| stage_outs[i].clone()).collect();
        let (fused, neck) = self.neck.forward(params, &level_in)?;
        let mut outs = Vec::with_capacity(fused.len());
        let mut heads = Vec::with_capacity(fused.len());
        for (level, f) in fused.iter().enumerate() {
            let (o, c) = self.head.forward(params, f, level)?;
            outs.push(o);
            heads.push(c);
        }
        Ok((outs, ForwardCache { backbone, neck, heads }))
    }

    pub fn predict(&self, params: &ParamSet, image: &FeatureMap) -> Result<Vec<HeadOutput>> {
        Ok(self.forward(params, image)?.0)
    }

    /// Accumulates parameter gradients for output gradients `d_outs`.
    pub fn backward(
        &self,
        params: &ParamSet,
        cache: &ForwardCache,
        outs: &[HeadOutput],
        d_outs: &[HeadOutput],
        grads: &mut Grads,
    ) -> Result<()> {
        let mut d_fused = Vec::with_capacity(outs.len());
        for ((c, o), d) in cache.heads.iter().zip(outs).zip(d_outs) {
            d_fused.push(self.head.backward(params, c, o, d, grads)?);
        }
        let d_levels = self.neck.backward(params, &cache.neck, &d_fused, grads)?;
        let mut d_stage: Vec<Option<FeatureMap>> = vec![None; STAGE_STRIDES.len()];
        for (&i, d) in self.level_stage.iter().zip(d_levels) {
            d_stage[i] = Some(d);
        }
        self.backbone.backward(params, &cache.backbone, &d_stage, grads)
    }

    /// Every convolution application per image, with the stride of its input.
    /// Head convolutions appear once per pyramid level.
    pub fn conv_plan(&self) -> Vec<(&Conv2d, usize)> {
        let mut plan = self.backbone.convs();
        for (level, conv) in self.neck.convs() {
            plan.push((conv, self.config.pyramid_strides[level]));
        }
        for conv in self.head.convs() {
            for &s in &self.config.pyramid_strides {
                plan.push((conv, s));
            }
        }
        plan
    }
}
