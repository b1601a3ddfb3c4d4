//! Attentive transparency detection head.
//!
//! A tower of 3x3 conv / group-norm / ReLU layers feeds a channel attention
//! block: spatial average and max pooling give two per-channel descriptors,
//! their sum is softmax-normalized across channels, the tower features are
//! reweighted by the scores and added back onto the tower output. Three 3x3
//! projections then produce class logits, box distances and centerness.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::nn::{CnrCache, Conv2d, ConvCache, ConvNormRelu, FeatureMap, Grads, ParamSet};

/// Classification bias prior probability for freshly initialized heads.
pub const CLS_PRIOR: f64 = 0.01;

/// Exponent cap for the distance activation.
const MAX_REG_EXPONENT: f64 = 20.0;

/// Where the attention block sits.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum HeadLayout {
    /// One tower and one attention block shared by all three outputs.
    Shared,
    /// Separate classification and regression towers, each with its own
    /// attention block; centerness hangs off the regression tower.
    PerBranch,
}

impl std::str::FromStr for HeadLayout {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "shared" => Ok(HeadLayout::Shared),
            "per_branch" => Ok(HeadLayout::PerBranch),
            _ => Err(Error::Config(format!("unknown head layout {s:?}"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HeadConfig {
    pub channels: usize,
    pub num_classes: usize,
    pub tower_depth: usize,
    pub attention_enabled: bool,
    pub rescale_by_c: bool,
    pub layout: HeadLayout,
}

impl Default for HeadConfig {
    fn default() -> Self {
        Self {
            channels: 32,
            num_classes: 2,
            tower_depth: 4,
            attention_enabled: true,
            rescale_by_c: true,
            layout: HeadLayout::Shared,
        }
    }
}

impl HeadConfig {
    pub fn validate(&self) -> Result<()> {
        if self.channels == 0 || self.num_classes == 0 {
            return Err(Error::Config("head channels and classes must be positive".into()));
        }
        Ok(())
    }
}

/// Softmax-normalized per-channel weights: positive and summing to one.
#[derive(Debug, Clone, PartialEq)]
pub struct AttentionScores(Vec<f64>);

impl AttentionScores {
    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn uniform(c: usize) -> Self {
        Self(vec![1.0 / c as f64; c])
    }
}

/// Per-level head predictions. `reg` holds non-negative `(l, t, r, b)`
/// distances in units of the level stride.
#[derive(Debug, Clone, PartialEq)]
pub struct HeadOutput {
    pub cls_logits: FeatureMap,
    pub reg: FeatureMap,
    pub centerness: FeatureMap,
}

impl HeadOutput {
    pub fn height(&self) -> usize {
        self.cls_logits.height()
    }

    pub fn width(&self) -> usize {
        self.cls_logits.width()
    }

    pub fn stride(&self) -> usize {
        self.cls_logits.stride
    }

    pub(crate) fn zeros_like(&self) -> Self {
        Self {
            cls_logits: self.cls_logits.zeros_like(),
            reg: self.reg.zeros_like(),
            centerness: self.centerness.zeros_like(),
        }
    }

    pub fn is_finite(&self) -> bool {
        self.cls_logits.is_finite() && self.reg.is_finite() && self.centerness.is_finite()
    }
}

/// Spatial mean and max of every channel.
pub fn channel_descriptors(fmap: &FeatureMap) -> (Vec<f64>, Vec<f64>) {
    let (gap, mp, _) = descriptors_with_argmax(fmap);
    (gap, mp)
}

fn descriptors_with_argmax(fmap: &FeatureMap) -> (Vec<f64>, Vec<f64>, Vec<usize>) {
    let n = fmap.plane() as f64;
    let mut gap = Vec::with_capacity(fmap.channels());
    let mut mp = Vec::with_capacity(fmap.channels());
    let mut arg = Vec::with_capacity(fmap.channels());
    for c in 0..fmap.channels() {
        let ch = fmap.channel(c);
        gap.push(ch.iter().sum::<f64>() / n);
        let (i, m) = ch
            .iter()
            .enumerate()
            .fold((0, f64::NEG_INFINITY), |(bi, bv), (i, &v)| if v > bv { (i, v) } else { (bi, bv) });
        mp.push(m);
        arg.push(i);
    }
    (gap, mp, arg)
}

/// Softmax over channels of the summed descriptors.
pub fn fuse_and_normalize(gap: &[f64], mp: &[f64]) -> Result<AttentionScores> {
    if gap.len() != mp.len() {
        return Err(Error::Config(format!(
            "descriptor lengths differ: {} vs {}",
            gap.len(),
            mp.len()
        )));
    }
    if gap.is_empty() {
        return Err(Error::Config("no channels to normalize".into()));
    }
    let fused: Vec<f64> = gap.iter().zip(mp).map(|(a, b)| a + b).collect();
    if fused.iter().any(|v| !v.is_finite()) {
        return Err(Error::Numeric("non-finite channel descriptor".into()));
    }
    let hi = fused.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let exps: Vec<f64> = fused.iter().map(|v| (v - hi).exp()).collect();
    let z: f64 = exps.iter().sum();
    Ok(AttentionScores(exps.into_iter().map(|e| e / z).collect()))
}

fn channel_gain(scores: &AttentionScores, rescale_by_c: bool) -> f64 {
    if rescale_by_c {
        scores.len() as f64
    } else {
        1.0
    }
}

/// Scales channel `c` by `scores[c]` (times `C` when rescaling is on).
pub fn apply_attention(fmap: &FeatureMap, scores: &AttentionScores, config: &HeadConfig) -> Result<FeatureMap> {
    if scores.len() != fmap.channels() {
        return Err(Error::Config(format!(
            "{} attention scores for {} channels",
            scores.len(),
            fmap.channels()
        )));
    }
    let gain = channel_gain(scores, config.rescale_by_c);
    let mut out = fmap.clone();
    for (c, s) in scores.as_slice().iter().enumerate() {
        let k = s * gain;
        out.channel_mut(c).iter_mut().for_each(|v| *v *= k);
    }
    Ok(out)
}

/// Elementwise sum of the tower features and their attended version.
pub fn shortcut_merge(original: &FeatureMap, attended: &FeatureMap) -> Result<FeatureMap> {
    crate::nn::add(original, attended)
}

/// Dual-pooling channel attention with its shortcut, as one differentiable
/// unit. When disabled the reweighting is the identity, so the block
/// returns the same shortcut sum that uniform attention with rescaling gives.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AttentionBlock {
    pub enabled: bool,
    pub rescale_by_c: bool,
}

pub struct AttentionCache {
    input: FeatureMap,
    scores: AttentionScores,
    argmax: Vec<usize>,
}

impl AttentionBlock {
    pub fn from_config(config: &HeadConfig) -> Self {
        Self {
            enabled: config.attention_enabled,
            rescale_by_c: config.rescale_by_c,
        }
    }

    pub fn forward(&self, x: &FeatureMap) -> Result<(FeatureMap, AttentionCache)> {
        let (scores, argmax) = if self.enabled {
            let (gap, mp, arg) = descriptors_with_argmax(x);
            (fuse_and_normalize(&gap, &mp)?, arg)
        } else {
            (AttentionScores::uniform(x.channels()), Vec::new())
        };
        let cfg = HeadConfig {
            rescale_by_c: self.rescale_by_c,
            ..HeadConfig::default()
        };
        let attended = if self.enabled {
            apply_attention(x, &scores, &cfg)?
        } else {
            x.clone()
        };
        let y = shortcut_merge(x, &attended)?;
        Ok((
            y,
            AttentionCache {
                input: x.clone(),
                scores,
                argmax,
            },
        ))
    }

    pub fn backward(&self, cache: &AttentionCache, dy: &FeatureMap) -> FeatureMap {
        if !self.enabled {
            let mut dx = dy.clone();
            dx.data_mut().iter_mut().for_each(|v| *v *= 2.0);
            return dx;
        }
        let x = &cache.input;
        let s = cache.scores.as_slice();
        let gain = channel_gain(&cache.scores, self.rescale_by_c);
        let c_count = x.channels();
        let mut dx = dy.clone();
        // shortcut plus the reweighting path with scores held fixed
        for c in 0..c_count {
            let k = 1.0 + s[c] * gain;
            dx.channel_mut(c).iter_mut().for_each(|v| *v *= k);
        }
        // d loss / d score_c
        let ds: Vec<f64> = (0..c_count)
            .map(|c| gain * dy.channel(c).iter().zip(x.channel(c)).map(|(d, v)| d * v).sum::<f64>())
            .collect();
        let dot: f64 = s.iter().zip(&ds).map(|(a, b)| a * b).sum();
        let n = x.plane() as f64;
        for c in 0..c_count {
            let dz = s[c] * (ds[c] - dot);
            let ch = dx.channel_mut(c);
            ch.iter_mut().for_each(|v| *v += dz / n);
            ch[cache.argmax[c]] += dz;
        }
        dx
    }
}

/// Stack of `depth` conv / group-norm / ReLU layers at constant width.
#[derive(Debug, Clone, PartialEq)]
pub struct Tower {
    prefix: String,
    layers: Vec<ConvNormRelu>,
}

impl Tower {
    pub fn new(prefix: &str, channels: usize, depth: usize) -> Self {
        Self {
            prefix: prefix.to_string(),
            layers: (0..depth)
                .map(|i| ConvNormRelu::new(&format!("{prefix}.{i}"), channels, channels, 3, 1))
                .collect(),
        }
    }

    pub fn layers(&self) -> &[ConvNormRelu] {
        &self.layers
    }

    pub fn init(&self, params: &mut ParamSet, rng: &mut impl rand::Rng) -> Result<()> {
        self.layers.iter().try_for_each(|l| l.init(params, rng))
    }

    fn check_depth(&self, params: &ParamSet) -> Result<()> {
        let extra = format!("{}.{}.conv.weight", self.prefix, self.layers.len());
        if params.contains(&extra) {
            return Err(Error::Config(format!(
                "parameters hold more than {} layers for {}",
                self.layers.len(),
                self.prefix
            )));
        }
        Ok(())
    }

    pub fn forward(&self, params: &ParamSet, x: &FeatureMap) -> Result<(FeatureMap, Vec<CnrCache>)> {
        self.check_depth(params)?;
        let mut h = x.clone();
        let mut caches = Vec::with_capacity(self.layers.len());
        for l in &self.layers {
            let (y, c) = l.forward(params, &h)?;
            caches.push(c);
            h = y;
        }
        Ok((h, caches))
    }

    pub fn backward(&self, params: &ParamSet, caches: &[CnrCache], dy: &FeatureMap, grads: &mut Grads) -> Result<FeatureMap> {
        let mut d = dy.clone();
        for (l, c) in self.layers.iter().zip(caches).rev() {
            d = l.backward(params, c, &d, grads)?;
        }
        Ok(d)
    }
}

/// Runs the shared tower of `config` over `fmap`.
pub fn conv_tower(fmap: &FeatureMap, config: &HeadConfig, params: &ParamSet) -> Result<FeatureMap> {
    let tower = Tower::new("head.tower", config.channels, config.tower_depth);
    Ok(tower.forward(params, fmap)?.0)
}

/// One branch: tower followed by the attention block.
#[derive(Debug, Clone, PartialEq)]
struct Branch {
    tower: Tower,
    attention: AttentionBlock,
}

struct BranchCache {
    tower: Vec<CnrCache>,
    attention: AttentionCache,
}

impl Branch {
    fn forward(&self, params: &ParamSet, x: &FeatureMap) -> Result<(FeatureMap, BranchCache)> {
        let (t, tower) = self.tower.forward(params, x)?;
        let (a, attention) = self.attention.forward(&t)?;
        Ok((a, BranchCache { tower, attention }))
    }

    fn backward(&self, params: &ParamSet, cache: &BranchCache, dy: &FeatureMap, grads: &mut Grads) -> Result<FeatureMap> {
        let d = self.attention.backward(&cache.attention, dy);
        self.tower.backward(params, &cache.tower, &d, grads)
    }
}

/// The full head, shared across pyramid levels except for a learnable
/// per-level distance scale.
#[derive(Debug, Clone, PartialEq)]
pub struct Head {
    pub config: HeadConfig,
    pub levels: usize,
    cls_branch: Branch,
    reg_branch: Option<Branch>,
    cls_out: Conv2d,
    reg_out: Conv2d,
    ctr_out: Conv2d,
}

pub struct HeadCache {
    cls_branch: BranchCache,
    reg_branch: Option<BranchCache>,
    cls_out: ConvCache,
    reg_out: ConvCache,
    ctr_out: ConvCache,
    reg_pre: FeatureMap,
    level: usize,
    /// Post-attention feature map feeding the classification projection.
    pub cls_features: FeatureMap,
}

pub fn scale_name(level: usize) -> String {
    format!("head.scale.{level}")
}

impl Head {
    pub fn new(config: &HeadConfig, levels: usize) -> Self {
        let c = config.channels;
        let attention = AttentionBlock::from_config(config);
        let (cls_branch, reg_branch) = match config.layout {
            HeadLayout::Shared => (
                Branch {
                    tower: Tower::new("head.tower", c, config.tower_depth),
                    attention,
                },
                None,
            ),
            HeadLayout::PerBranch => (
                Branch {
                    tower: Tower::new("head.cls_tower", c, config.tower_depth),
                    attention,
                },
                Some(Branch {
                    tower: Tower::new("head.reg_tower", c, config.tower_depth),
                    attention,
                }),
            ),
        };
        Self {
            config: config.clone(),
            levels,
            cls_branch,
            reg_branch,
            cls_out: Conv2d::new("head.cls_out", c, config.num_classes, 3, 1),
            reg_out: Conv2d::new("head.reg_out", c, 4, 3, 1),
            ctr_out: Conv2d::new("head.ctr_out", c, 1, 3, 1),
        }
    }

    pub fn convs(&self) -> Vec<&Conv2d> {
        let mut v: Vec<&Conv2d> = self.cls_branch.tower.layers().iter().map(|l| &l.conv).collect();
        if let Some(b) = &self.reg_branch {
            v.extend(b.tower.layers().iter().map(|l| &l.conv));
        }
        v.extend([&self.cls_out, &self.reg_out, &self.ctr_out]);
        v
    }

    pub fn init(&self, params: &mut ParamSet, rng: &mut impl rand::Rng) -> Result<()> {
        self.cls_branch.tower.init(params, rng)?;
        if let Some(b) = &self.reg_branch {
            b.tower.init(params, rng)?;
        }
        let prior = -((1.0 - CLS_PRIOR) / CLS_PRIOR).ln();
        self.cls_out.init(params, rng, prior)?;
        self.reg_out.init(params, rng, 0.0)?;
        self.ctr_out.init(params, rng, 0.0)?;
        // output projections start small so early predictions stay near the prior
        for name in ["head.cls_out.weight", "head.reg_out.weight", "head.ctr_out.weight"] {
            params.get_mut(name)?.data.iter_mut().for_each(|v| *v *= 0.1);
        }
        for l in 0..self.levels {
            params.insert(scale_name(l), vec![1], vec![1.0])?;
        }
        Ok(())
    }

    pub fn forward(&self, params: &ParamSet, x: &FeatureMap, level: usize) -> Result<(HeadOutput, HeadCache)> {
        if x.channels() != self.config.channels {
            return Err(Error::Config(format!(
                "head expects {} channels, got {}",
                self.config.channels,
                x.channels()
            )));
        }
        let (cls_feat, cls_cache) = self.cls_branch.forward(params, x)?;
        let (reg_feat, reg_cache) = match &self.reg_branch {
            Some(b) => {
                let (f, c) = b.forward(params, x)?;
                (Some(f), Some(c))
            }
            None => (None, None),
        };
        let reg_in = reg_feat.as_ref().unwrap_or(&cls_feat);
        let (cls_logits, cls_out) = self.cls_out.forward(params, &cls_feat)?;
        let (reg_pre, reg_out) = self.reg_out.forward(params, reg_in)?;
        let (centerness, ctr_out) = self.ctr_out.forward(params, reg_in)?;
        let (_, scale) = params.expect(&scale_name(level), &[1])?;
        let mut reg = reg_pre.clone();
        reg.data_mut()
            .iter_mut()
            .for_each(|v| *v = (scale[0] * *v).min(MAX_REG_EXPONENT).exp());
        let out = HeadOutput {
            cls_logits,
            reg,
            centerness,
        };
        if !out.is_finite() {
            return Err(Error::Numeric("non-finite head output".into()));
        }
        Ok((
            out,
            HeadCache {
                cls_branch: cls_cache,
                reg_branch: reg_cache,
                cls_out,
                reg_out,
                ctr_out,
                reg_pre,
                level,
                cls_features: cls_feat,
            },
        ))
    }

    /// Backpropagates output gradients (`reg` with respect to the activated
    /// distances) and returns the gradient with respect to the head input.
    pub fn backward(
        &self,
        params: &ParamSet,
        cache: &HeadCache,
        out: &HeadOutput,
        d_out: &HeadOutput,
        grads: &mut Grads,
    ) -> Result<FeatureMap> {
        let (sid, scale) = params.expect(&scale_name(cache.level), &[1])?;
        let s = scale[0];
        let mut d_pre = d_out.reg.clone();
        let mut d_scale = 0.0;
        for ((d, &r), &z) in d_pre.data_mut().iter_mut().zip(out.reg.data()).zip(cache.reg_pre.data()) {
            if s * z >= MAX_REG_EXPONENT {
                *d = 0.0;
                continue;
            }
            let g = *d * r;
            d_scale += g * z;
            *d = g * s;
        }
        grads.slot_mut(sid)[0] += d_scale;

        let mut d_cls_feat = self.cls_out.backward(params, &cache.cls_out, &d_out.cls_logits, grads)?;
        let mut d_reg_feat = self.reg_out.backward(params, &cache.reg_out, &d_pre, grads)?;
        let d_ctr = self.ctr_out.backward(params, &cache.ctr_out, &d_out.centerness, grads)?;
        d_reg_feat.add_assign(&d_ctr);
        match (&self.reg_branch, &cache.reg_branch) {
            (Some(b), Some(bc)) => {
                let mut dx = self.cls_branch.backward(params, &cache.cls_branch, &d_cls_feat, grads)?;
                dx.add_assign(&b.backward(params, bc, &d_reg_feat, grads)?);
                Ok(dx)
            }
            _ => {
                d_cls_feat.add_assign(&d_reg_feat);
                self.cls_branch.backward(params, &cache.cls_branch, &d_cls_feat, grads)
            }
        }
    }
}

/// Initializes a standalone head with `levels` distance scales.
pub fn init_head_params(config: &HeadConfig, levels: usize, seed: u64) -> Result<ParamSet> {
    let mut params = ParamSet::new();
    let mut rng = crate::util::rng_for(seed, "head-init");
    Head::new(config, levels).init(&mut params, &mut rng)?;
    Ok(params)
}

/// Forward pass of the head at pyramid `level`.
pub fn head_forward(fmap: &FeatureMap, config: &HeadConfig, params: &ParamSet, level: usize) -> Result<HeadOutput> {
    Ok(Head::new(config, level + 1).forward(params, fmap, level)?.0)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn fmap(c: usize, h: usize, w: usize, f: impl FnMut(usize, usize, usize) -> f64) -> FeatureMap {
        FeatureMap::from_fn(c, h, w, 8, f)
    }

    #[test]
    fn descriptors_examples() {
        let m = fmap(1, 1, 2, |_, _, x| if x == 0 { 0.0 } else { 4.0 });
        assert_eq!(channel_descriptors(&m), (vec![2.0], vec![4.0]));
        let k = fmap(2, 3, 3, |c, _, _| c as f64 - 0.5);
        let (g, p) = channel_descriptors(&k);
        assert_eq!(g, p);
    }

    #[test]
    fn softmax_examples() {
        let s = fuse_and_normalize(&[1.0; 4], &[2.0; 4]).unwrap();
        assert_eq!(s.as_slice(), &[0.25; 4]);
        let s = fuse_and_normalize(&[0.0, 3f64.ln()], &[0.0, 0.0]).unwrap();
        assert!((s.as_slice()[0] - 0.25).abs() < 1e-15);
        assert!((s.as_slice()[1] - 0.75).abs() < 1e-15);
        assert!(fuse_and_normalize(&[1.0], &[1.0, 2.0]).is_err());
    }

    #[test]
    fn softmax_extreme_magnitudes() {
        let s = fuse_and_normalize(&[1e4, -1e4, 0.0], &[1e4, -1e4, 3.0]).unwrap();
        let sum: f64 = s.as_slice().iter().sum();
        assert!((sum - 1.0).abs() < 1e-6);
        assert!(s.as_slice().iter().all(|v| *v > 0.0 || *v == 0.0));
    }

    #[test]
    fn uniform_attention_with_rescale_is_identity() {
        let m = fmap(3, 2, 2, |c, y, x| (c + 2 * y + x) as f64);
        let out = apply_attention(&m, &AttentionScores::uniform(3), &HeadConfig::default()).unwrap();
        for (a, b) in out.data().iter().zip(m.data()) {
            assert!((a - b).abs() < 1e-15);
        }
    }

    #[test]
    fn peaked_attention_amplifies_leading_channel() {
        let m = fmap(2, 2, 2, |_, _, _| 1.0);
        let s = AttentionScores(vec![0.97, 0.03]);
        let out = apply_attention(&m, &s, &HeadConfig::default()).unwrap();
        assert!((out.at(0, 0, 0) - 1.94).abs() < 1e-12);
        assert!((out.at(1, 1, 1) - 0.06).abs() < 1e-12);
    }

    #[test]
    fn shortcut_cases() {
        let x = fmap(2, 2, 3, |c, y, x| (c * 6 + y * 3 + x) as f64);
        let z = x.zeros_like();
        assert_eq!(shortcut_merge(&x, &z).unwrap(), x);
        let twice = shortcut_merge(&x, &x).unwrap();
        assert!(twice.data().iter().zip(x.data()).all(|(a, b)| *a == 2.0 * b));
        assert!(shortcut_merge(&x, &fmap(2, 3, 2, |_, _, _| 0.0)).is_err());
    }

    #[test]
    fn tower_shapes_and_zero_input() {
        let cfg = HeadConfig {
            channels: 8,
            ..HeadConfig::default()
        };
        let p = init_head_params(&cfg, 1, 3).unwrap();
        let x = fmap(8, 5, 7, |c, y, x| ((c * 31 + y * 7 + x) % 5) as f64 - 2.0);
        assert_eq!(conv_tower(&x, &cfg, &p).unwrap().shape(), (8, 5, 7));
        let zero = conv_tower(&x.zeros_like(), &cfg, &p).unwrap();
        assert!(zero.data().iter().all(|v| *v == 0.0));
    }

    #[test]
    fn tower_depth_mismatch_is_config_error() {
        let cfg = HeadConfig {
            channels: 4,
            ..HeadConfig::default()
        };
        let shallow = HeadConfig {
            tower_depth: 3,
            ..cfg.clone()
        };
        let deep = HeadConfig {
            tower_depth: 5,
            ..cfg.clone()
        };
        let x = fmap(4, 3, 3, |_, y, x| (y + x) as f64);
        let p3 = init_head_params(&shallow, 1, 0).unwrap();
        assert!(matches!(conv_tower(&x, &cfg, &p3), Err(Error::Config(_))));
        let p5 = init_head_params(&deep, 1, 0).unwrap();
        assert!(matches!(conv_tower(&x, &cfg, &p5), Err(Error::Config(_))));
    }

    #[test]
    fn head_output_shapes() {
        for layout in [HeadLayout::Shared, HeadLayout::PerBranch] {
            let cfg = HeadConfig {
                channels: 8,
                layout,
                ..HeadConfig::default()
            };
            let p = init_head_params(&cfg, 1, 5).unwrap();
            let x = fmap(8, 5, 7, |c, y, x| ((c + y * x) % 3) as f64 * 0.5);
            let out = head_forward(&x, &cfg, &p, 0).unwrap();
            assert_eq!(out.cls_logits.shape(), (2, 5, 7));
            assert_eq!(out.reg.shape(), (4, 5, 7));
            assert_eq!(out.centerness.shape(), (1, 5, 7));
            assert!(out.reg.data().iter().all(|v| *v >= 0.0));
        }
    }
}
