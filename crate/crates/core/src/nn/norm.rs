use super::params::{Grads, ParamSet};
use super::tensor::FeatureMap;
use crate::error::{Error, Result};

const EPS: f64 = 1e-5;

/// Group normalization with per-channel affine `{name}.gamma` / `{name}.beta`.
#[derive(Debug, Clone, PartialEq)]
pub struct GroupNorm {
    pub name: String,
    pub channels: usize,
    pub groups: usize,
}

pub struct NormCache {
    xhat: Vec<f64>,
    inv_std: Vec<f64>,
}

/// Largest of 8, 4, 2, 1 that divides `channels`.
pub fn default_groups(channels: usize) -> usize {
    [8, 4, 2, 1].into_iter().find(|g| channels % g == 0).unwrap_or(1)
}

impl GroupNorm {
    pub fn new(name: impl Into<String>, channels: usize) -> Self {
        Self {
            name: name.into(),
            channels,
            groups: default_groups(channels),
        }
    }

    pub fn param_count(&self) -> usize {
        2 * self.channels
    }

    pub fn init(&self, params: &mut ParamSet) -> Result<()> {
        params.insert(format!("{}.gamma", self.name), vec![self.channels], vec![1.0; self.channels])?;
        params.insert(format!("{}.beta", self.name), vec![self.channels], vec![0.0; self.channels])?;
        Ok(())
    }

    fn affine<'p>(&self, params: &'p ParamSet) -> Result<((usize, &'p [f64]), (usize, &'p [f64]))> {
        Ok((
            params.expect(&format!("{}.gamma", self.name), &[self.channels])?,
            params.expect(&format!("{}.beta", self.name), &[self.channels])?,
        ))
    }

    pub fn forward(&self, params: &ParamSet, x: &FeatureMap) -> Result<(FeatureMap, NormCache)> {
        if x.channels() != self.channels {
            return Err(Error::Config(format!(
                "{}: expected {} channels, got {}",
                self.name,
                self.channels,
                x.channels()
            )));
        }
        let ((_, gamma), (_, beta)) = self.affine(params)?;
        let per_group = self.channels / self.groups;
        let plane = x.plane();
        let len = per_group * plane;
        let mut xhat = vec![0.0; x.data().len()];
        let mut inv_std = Vec::with_capacity(self.groups);
        let mut out = vec![0.0; x.data().len()];
        for g in 0..self.groups {
            let range = g * len..(g + 1) * len;
            let src = &x.data()[range.clone()];
            let mean = src.iter().sum::<f64>() / len as f64;
            let var = src.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / len as f64;
            let is = 1.0 / (var + EPS).sqrt();
            inv_std.push(is);
            for (i, v) in src.iter().enumerate() {
                let idx = range.start + i;
                let c = idx / plane;
                let h = (v - mean) * is;
                xhat[idx] = h;
                out[idx] = gamma[c] * h + beta[c];
            }
        }
        Ok((
            FeatureMap::from_raw(x.channels(), x.height(), x.width(), x.stride, out),
            NormCache { xhat, inv_std },
        ))
    }

    pub fn backward(&self, params: &ParamSet, cache: &NormCache, dy: &FeatureMap, grads: &mut Grads) -> Result<FeatureMap> {
        let ((gid, gamma), (bid, _)) = self.affine(params)?;
        let plane = dy.plane();
        let per_group = self.channels / self.groups;
        let len = per_group * plane;
        {
            let gg = grads.slot_mut(gid);
            for c in 0..self.channels {
                let r = c * plane..(c + 1) * plane;
                gg[c] += dy.data()[r.clone()].iter().zip(&cache.xhat[r]).map(|(d, h)| d * h).sum::<f64>();
            }
        }
        {
            let gb = grads.slot_mut(bid);
            for (c, g) in gb.iter_mut().enumerate() {
                *g += dy.channel(c).iter().sum::<f64>();
            }
        }
        let mut dx = vec![0.0; dy.data().len()];
        let n = len as f64;
        for g in 0..self.groups {
            let range = g * len..(g + 1) * len;
            let mut sum_d = 0.0;
            let mut sum_dh = 0.0;
            for idx in range.clone() {
                let d = dy.data()[idx] * gamma[idx / plane];
                sum_d += d;
                sum_dh += d * cache.xhat[idx];
            }
            let is = cache.inv_std[g];
            for idx in range {
                let d = dy.data()[idx] * gamma[idx / plane];
                dx[idx] = is / n * (n * d - sum_d - cache.xhat[idx] * sum_dh);
            }
        }
        Ok(FeatureMap::from_raw(dy.channels(), dy.height(), dy.width(), dy.stride, dx))
    }
}
