use image::{GrayImage, Luma, Rgb, RgbImage};

use crate::boxmetrics::{BBox, Category};
use crate::dataingest::{image_to_tensor, letterbox, LetterboxTransform};
use crate::detector::{Checkpoint, Detector};
use crate::error::{Error, Result};
use crate::nn::{sigmoid, Conv2d, FeatureMap, Grads, ParamSet};

/// A `[0, 1]` map over detector input pixels.
#[derive(Debug, Clone, PartialEq)]
pub struct Heatmap {
    pub width: usize,
    pub height: usize,
    pub values: Vec<f64>,
}

impl Heatmap {
    pub fn at(&self, x: usize, y: usize) -> f64 {
        self.values[y * self.width + x]
    }

    pub fn max(&self) -> f64 {
        self.values.iter().cloned().fold(0.0, f64::max)
    }

    pub fn to_gray(&self) -> GrayImage {
        GrayImage::from_fn(self.width as u32, self.height as u32, |x, y| {
            Luma([(self.at(x as usize, y as usize) * 255.0).round() as u8])
        })
    }

    /// Blends a heat colormap over `base` with opacity proportional to the map.
    pub fn overlay(&self, base: &RgbImage) -> Result<RgbImage> {
        if (base.width() as usize, base.height() as usize) != (self.width, self.height) {
            return Err(Error::Config("overlay base image size differs from heatmap".into()));
        }
        Ok(RgbImage::from_fn(base.width(), base.height(), |x, y| {
            let h = self.at(x as usize, y as usize);
            let heat = [3.0 * h, 3.0 * h - 1.0, 3.0 * h - 2.0].map(|v: f64| v.clamp(0.0, 1.0) * 255.0);
            let a = 0.6 * h;
            let p = base.get_pixel(x, y);
            Rgb([0, 1, 2].map(|k| (p[k] as f64 * (1.0 - a) + heat[k] * a).round() as u8))
        }))
    }

    /// Share of total mass on pixels whose centers lie inside any box.
    pub fn mass_inside(&self, boxes: &[BBox]) -> f64 {
        let total: f64 = self.values.iter().sum();
        if total <= 0.0 {
            return 0.0;
        }
        let mut inside = 0.0;
        for y in 0..self.height {
            for x in 0..self.width {
                let (px, py) = (x as f64 + 0.5, y as f64 + 0.5);
                if boxes.iter().any(|b| b.contains_point(px, py)) {
                    inside += self.at(x, y);
                }
            }
        }
        inside / total
    }
}

/// Gradient-weighted activation map of `features` for class `k`.
///
/// The class score is the summed sigmoid response of the classification
/// projection; each channel is weighted by its spatially averaged gradient.
fn weighted_map(params: &ParamSet, cls_out: &Conv2d, features: &FeatureMap, k: usize) -> Result<FeatureMap> {
    let (logits, cache) = cls_out.forward(params, features)?;
    let mut d = logits.zeros_like();
    for (g, &z) in d.channel_mut(k).iter_mut().zip(logits.channel(k)) {
        let s = sigmoid(z);
        *g = s * (1.0 - s);
    }
    let mut scratch = Grads::zeros_like(params);
    let df = cls_out.backward(params, &cache, &d, &mut scratch)?;
    let (c, h, w) = features.shape();
    let mut map = FeatureMap::zeros(1, h, w, features.stride);
    for ch in 0..c {
        let alpha = df.channel(ch).iter().sum::<f64>() / (h * w) as f64;
        for (m, &f) in map.channel_mut(0).iter_mut().zip(features.channel(ch)) {
            *m += alpha * f;
        }
    }
    Ok(map)
}

/// Bilinear upsampling of a single-channel cell grid to pixels.
fn upsample(map: &FeatureMap, width: usize, height: usize) -> Vec<f64> {
    let (_, h, w) = map.shape();
    let s = map.stride as f64;
    let mut out = Vec::with_capacity(width * height);
    for y in 0..height {
        let fy = ((y as f64 + 0.5) / s - 0.5).clamp(0.0, (h - 1) as f64);
        let (y0, ty) = (fy.floor() as usize, fy - fy.floor());
        let y1 = (y0 + 1).min(h - 1);
        for x in 0..width {
            let fx = ((x as f64 + 0.5) / s - 0.5).clamp(0.0, (w - 1) as f64);
            let (x0, tx) = (fx.floor() as usize, fx - fx.floor());
            let x1 = (x0 + 1).min(w - 1);
            let top = map.at(0, y0, x0) * (1.0 - tx) + map.at(0, y0, x1) * tx;
            let bot = map.at(0, y1, x0) * (1.0 - tx) + map.at(0, y1, x1) * tx;
            out.push(top * (1.0 - ty) + bot * ty);
        }
    }
    out
}

/// CAM for an already letterboxed input tensor.
pub fn cam_tensor(detector: &Detector, params: &ParamSet, input: &FeatureMap, class: Category, level: usize) -> Result<Heatmap> {
    if level >= detector.levels() {
        return Err(Error::Config(format!(
            "level {level} out of range, model has {} levels",
            detector.levels()
        )));
    }
    let (_, cache) = detector.forward(params, input)?;
    let features = cache.head_features(level).expect("level checked above");
    let head = &detector.config.head;
    let cls_out = Conv2d::new("head.cls_out", head.channels, head.num_classes, 3, 1);
    let mut map = weighted_map(params, &cls_out, features, class.index())?;
    map.data_mut().iter_mut().for_each(|v| *v = v.max(0.0));
    let (_, h, w) = input.shape();
    let mut values = upsample(&map, w, h);
    let peak = values.iter().cloned().fold(0.0, f64::max);
    if peak > 0.0 && peak.is_finite() {
        values.iter_mut().for_each(|v| *v /= peak);
    } else {
        values.iter_mut().for_each(|v| *v = 0.0);
    }
    Ok(Heatmap {
        width: w,
        height: h,
        values,
    })
}

/// Result of [`cam`]: the map plus the letterboxed input it covers.
#[derive(Debug, Clone)]
pub struct CamOutput {
    pub heatmap: Heatmap,
    pub input: RgbImage,
    pub transform: LetterboxTransform,
}

impl CamOutput {
    /// Writes the heatmap as 8-bit grayscale, or as a color overlay on the
    /// letterboxed input.
    pub fn write_png(&self, path: &std::path::Path, overlay: bool) -> Result<()> {
        let img: image::DynamicImage = if overlay {
            self.heatmap.overlay(&self.input)?.into()
        } else {
            self.heatmap.to_gray().into()
        };
        crate::util::write_atomic(path, &crate::util::png_bytes(&img)?)
    }
}

/// Class activation map for `class` at pyramid `level` of `image`.
pub fn cam(checkpoint: &Checkpoint, image: &RgbImage, class: Category, level: usize) -> Result<CamOutput> {
    let detector = Detector::new(&checkpoint.config)?;
    let (boxed, transform) = letterbox(image, checkpoint.config.input_size, checkpoint.config.max_stride())?;
    let heatmap = cam_tensor(&detector, &checkpoint.params, &image_to_tensor(&boxed), class, level)?;
    Ok(CamOutput {
        heatmap,
        input: boxed,
        transform,
    })
}
