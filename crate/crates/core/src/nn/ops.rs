use super::tensor::FeatureMap;
use crate::error::{Error, Result};

pub fn relu(x: &FeatureMap) -> FeatureMap {
    let mut y = x.clone();
    y.data_mut().iter_mut().for_each(|v| *v = v.max(0.0));
    y
}

/// Gradient through a ReLU given its output.
pub fn relu_backward(y: &FeatureMap, dy: &FeatureMap) -> FeatureMap {
    let mut dx = dy.clone();
    for (d, v) in dx.data_mut().iter_mut().zip(y.data()) {
        if *v <= 0.0 {
            *d = 0.0;
        }
    }
    dx
}

/// Nearest-neighbour upsampling to `(h, w)`, which must be an integer
/// multiple of the input size.
pub fn upsample_nearest(x: &FeatureMap, h: usize, w: usize, stride: usize) -> Result<FeatureMap> {
    let f = upsample_factor(x, h, w)?;
    Ok(FeatureMap::from_fn(x.channels(), h, w, stride, |c, y, xx| x.at(c, y / f, xx / f)))
}

/// Sums each `f x f` block of `dy` back onto the coarse grid of `like`.
pub fn upsample_nearest_backward(like: &FeatureMap, dy: &FeatureMap) -> Result<FeatureMap> {
    let f = upsample_factor(like, dy.height(), dy.width())?;
    let mut dx = like.zeros_like();
    for c in 0..dy.channels() {
        for y in 0..dy.height() {
            for x in 0..dy.width() {
                let v = dx.at(c, y / f, x / f) + dy.at(c, y, x);
                dx.set(c, y / f, x / f, v);
            }
        }
    }
    Ok(dx)
}

fn upsample_factor(x: &FeatureMap, h: usize, w: usize) -> Result<usize> {
    let f = h / x.height();
    if f == 0 || h != x.height() * f || w != x.width() * f {
        return Err(Error::Config(format!(
            "cannot upsample {}x{} to {h}x{w} by an integer factor",
            x.height(),
            x.width()
        )));
    }
    Ok(f)
}

pub fn add(a: &FeatureMap, b: &FeatureMap) -> Result<FeatureMap> {
    if !a.same_shape(b) {
        return Err(Error::Config(format!(
            "shape mismatch {:?} vs {:?}",
            a.shape(),
            b.shape()
        )));
    }
    let mut y = a.clone();
    y.add_assign(b);
    Ok(y)
}

pub fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

/// `ln(1 + e^x)` without overflow.
pub fn softplus(x: f64) -> f64 {
    if x > 0.0 {
        x + (-x).exp().ln_1p()
    } else {
        x.exp().ln_1p()
    }
}
