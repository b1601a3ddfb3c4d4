use rand::Rng;
use rand_distr::StandardNormal;

use super::params::{Grads, ParamSet};
use super::tensor::FeatureMap;
use crate::error::{Error, Result};

/// 2-D convolution with square kernels, zero padding and an optional bias.
/// Parameters live in a [`ParamSet`] under `{name}.weight` (`[out, in, k, k]`)
/// and `{name}.bias` (`[out]`).
#[derive(Debug, Clone, PartialEq)]
pub struct Conv2d {
    pub name: String,
    pub in_channels: usize,
    pub out_channels: usize,
    pub kernel: usize,
    pub stride: usize,
    pub padding: usize,
    pub bias: bool,
}

pub struct ConvCache {
    cols: Vec<f64>,
    in_shape: (usize, usize, usize),
    in_stride: usize,
    out_hw: (usize, usize),
}

impl Conv2d {
    pub fn new(name: impl Into<String>, in_channels: usize, out_channels: usize, kernel: usize, stride: usize) -> Self {
        Self {
            name: name.into(),
            in_channels,
            out_channels,
            kernel,
            stride,
            padding: kernel / 2,
            bias: true,
        }
    }

    /// Drops the bias, for convolutions feeding a normalization layer.
    pub fn without_bias(mut self) -> Self {
        self.bias = false;
        self
    }

    pub fn weight_name(&self) -> String {
        format!("{}.weight", self.name)
    }

    pub fn bias_name(&self) -> String {
        format!("{}.bias", self.name)
    }

    pub fn weight_shape(&self) -> [usize; 4] {
        [self.out_channels, self.in_channels, self.kernel, self.kernel]
    }

    pub fn param_count(&self) -> usize {
        self.weight_shape().iter().product::<usize>() + if self.bias { self.out_channels } else { 0 }
    }

    pub fn output_hw(&self, h: usize, w: usize) -> (usize, usize) {
        (
            (h + 2 * self.padding - self.kernel) / self.stride + 1,
            (w + 2 * self.padding - self.kernel) / self.stride + 1,
        )
    }

    /// Multiply-accumulate operations for one forward pass at `h x w` input.
    pub fn mult_adds(&self, h: usize, w: usize) -> u64 {
        let (oh, ow) = self.output_hw(h, w);
        (oh * ow * self.out_channels * self.in_channels * self.kernel * self.kernel) as u64
    }

    /// Registers freshly initialized parameters: weights are zero-mean normal
    /// with standard deviation `sqrt(2 / fan_in)`; the bias is `bias_init`.
    pub fn init(&self, params: &mut ParamSet, rng: &mut impl Rng, bias_init: f64) -> Result<()> {
        let fan_in = (self.in_channels * self.kernel * self.kernel) as f64;
        let std = (2.0 / fan_in).sqrt();
        let n: usize = self.weight_shape().iter().product();
        let w = (0..n).map(|_| rng.sample::<f64, _>(StandardNormal) * std).collect();
        params.insert(self.weight_name(), self.weight_shape().to_vec(), w)?;
        if self.bias {
            params.insert(self.bias_name(), vec![self.out_channels], vec![bias_init; self.out_channels])?;
        }
        Ok(())
    }

    fn weights<'p>(&self, params: &'p ParamSet) -> Result<(usize, &'p [f64], Option<(usize, &'p [f64])>)> {
        let (wid, w) = params.expect(&self.weight_name(), &self.weight_shape())?;
        let b = if self.bias {
            Some(params.expect(&self.bias_name(), &[self.out_channels])?)
        } else {
            None
        };
        Ok((wid, w, b))
    }

    fn check_input(&self, x: &FeatureMap) -> Result<()> {
        if x.channels() != self.in_channels {
            return Err(Error::Config(format!(
                "{}: expected {} input channels, got {}",
                self.name,
                self.in_channels,
                x.channels()
            )));
        }
        if x.height() + 2 * self.padding < self.kernel || x.width() + 2 * self.padding < self.kernel {
            return Err(Error::Config(format!("{}: input smaller than kernel", self.name)));
        }
        Ok(())
    }

    pub fn forward(&self, params: &ParamSet, x: &FeatureMap) -> Result<(FeatureMap, ConvCache)> {
        self.check_input(x)?;
        let (_, w, b) = self.weights(params)?;
        let (oh, ow) = self.output_hw(x.height(), x.width());
        let kk = self.in_channels * self.kernel * self.kernel;
        let n = oh * ow;
        let cols = self.im2col(x, oh, ow);
        let mut out = vec![0.0; self.out_channels * n];
        if let Some((_, bias)) = b {
            for (o, row) in out.chunks_mut(n).enumerate() {
                row.fill(bias[o]);
            }
        }
        gemm(self.out_channels, kk, n, w, false, &cols, false, &mut out, 1.0);
        let fm = FeatureMap::from_raw(self.out_channels, oh, ow, x.stride * self.stride, out);
        Ok((
            fm,
            ConvCache {
                cols,
                in_shape: x.shape(),
                in_stride: x.stride,
                out_hw: (oh, ow),
            },
        ))
    }

    /// Accumulates parameter gradients and returns the input gradient.
    pub fn backward(&self, params: &ParamSet, cache: &ConvCache, dy: &FeatureMap, grads: &mut Grads) -> Result<FeatureMap> {
        let (wid, w, b) = self.weights(params)?;
        let (oh, ow) = cache.out_hw;
        let n = oh * ow;
        let kk = self.in_channels * self.kernel * self.kernel;
        debug_assert_eq!(dy.data().len(), self.out_channels * n);

        // dW += dy * cols^T
        gemm(self.out_channels, n, kk, dy.data(), false, &cache.cols, true, grads.slot_mut(wid), 1.0);
        if let Some((bid, _)) = b {
            let gb = grads.slot_mut(bid);
            for (o, row) in dy.data().chunks(n).enumerate() {
                gb[o] += row.iter().sum::<f64>();
            }
        }
        // dcols = W^T * dy
        let mut dcols = vec![0.0; kk * n];
        gemm(kk, self.out_channels, n, w, true, dy.data(), false, &mut dcols, 0.0);
        let (c, h, wd) = cache.in_shape;
        Ok(self.col2im(&dcols, c, h, wd, oh, ow, cache.in_stride))
    }

    fn im2col(&self, x: &FeatureMap, oh: usize, ow: usize) -> Vec<f64> {
        let (c, h, w) = x.shape();
        let k = self.kernel;
        let n = oh * ow;
        let mut cols = vec![0.0; c * k * k * n];
        let src = x.data();
        let pad = self.padding as isize;
        for ci in 0..c {
            let plane = &src[ci * h * w..(ci + 1) * h * w];
            for ky in 0..k {
                for kx in 0..k {
                    let row = ((ci * k + ky) * k + kx) * n;
                    let dst = &mut cols[row..row + n];
                    for oy in 0..oh {
                        let iy = (oy * self.stride) as isize + ky as isize - pad;
                        if iy < 0 || iy >= h as isize {
                            continue;
                        }
                        let src_row = &plane[iy as usize * w..(iy as usize + 1) * w];
                        let out_row = &mut dst[oy * ow..(oy + 1) * ow];
                        for (ox, o) in out_row.iter_mut().enumerate() {
                            let ix = (ox * self.stride) as isize + kx as isize - pad;
                            if ix >= 0 && ix < w as isize {
                                *o = src_row[ix as usize];
                            }
                        }
                    }
                }
            }
        }
        cols
    }

    #[allow(clippy::too_many_arguments)]
    fn col2im(&self, dcols: &[f64], c: usize, h: usize, w: usize, oh: usize, ow: usize, stride: usize) -> FeatureMap {
        let k = self.kernel;
        let n = oh * ow;
        let mut dx = vec![0.0; c * h * w];
        let pad = self.padding as isize;
        for ci in 0..c {
            let plane = &mut dx[ci * h * w..(ci + 1) * h * w];
            for ky in 0..k {
                for kx in 0..k {
                    let row = ((ci * k + ky) * k + kx) * n;
                    let src = &dcols[row..row + n];
                    for oy in 0..oh {
                        let iy = (oy * self.stride) as isize + ky as isize - pad;
                        if iy < 0 || iy >= h as isize {
                            continue;
                        }
                        let base = iy as usize * w;
                        for ox in 0..ow {
                            let ix = (ox * self.stride) as isize + kx as isize - pad;
                            if ix >= 0 && ix < w as isize {
                                plane[base + ix as usize] += src[oy * ow + ox];
                            }
                        }
                    }
                }
            }
        }
        FeatureMap::from_raw(c, h, w, stride, dx)
    }
}

/// `c = a * b + beta * c` for row-major matrices, `a` being `m x k` (or its
/// transpose when `ta`) and `b` being `k x n` (or transposed when `tb`).
#[allow(clippy::too_many_arguments)]
pub(crate) fn gemm(m: usize, k: usize, n: usize, a: &[f64], ta: bool, b: &[f64], tb: bool, c: &mut [f64], beta: f64) {
    assert!(a.len() >= m * k && b.len() >= k * n && c.len() >= m * n);
    let (rsa, csa) = if ta { (1, m as isize) } else { (k as isize, 1) };
    let (rsb, csb) = if tb { (1, k as isize) } else { (n as isize, 1) };
    // SAFETY: bounds checked above; strides describe the stated layouts.
    unsafe {
        matrixmultiply::dgemm(
            m, k, n, 1.0,
            a.as_ptr(), rsa, csa,
            b.as_ptr(), rsb, csb,
            beta,
            c.as_mut_ptr(), n as isize, 1,
        );
    }
}
