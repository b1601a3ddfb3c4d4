use image::{imageops, Rgb, RgbImage};
use serde::{Deserialize, Serialize};

use crate::boxmetrics::{BBox, LabeledBox};
use crate::error::{Error, Result};
use crate::nn::FeatureMap;

pub const PAD_GRAY: u8 = 114;

/// Affine map from source pixels to letterboxed pixels:
/// `x' = x * scale + pad_x`, `y' = y * scale + pad_y`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LetterboxTransform {
    pub scale: f64,
    pub pad_x: f64,
    pub pad_y: f64,
}

impl LetterboxTransform {
    pub const IDENTITY: Self = Self {
        scale: 1.0,
        pad_x: 0.0,
        pad_y: 0.0,
    };

    pub fn forward(&self, b: &BBox) -> Result<BBox> {
        BBox::new(
            b.cx() * self.scale + self.pad_x,
            b.cy() * self.scale + self.pad_y,
            b.w() * self.scale,
            b.h() * self.scale,
        )
    }

    pub fn inverse(&self, b: &BBox) -> Result<BBox> {
        BBox::new(
            (b.cx() - self.pad_x) / self.scale,
            (b.cy() - self.pad_y) / self.scale,
            b.w() / self.scale,
            b.h() / self.scale,
        )
    }

    pub fn forward_labeled(&self, b: &LabeledBox) -> Result<LabeledBox> {
        Ok(LabeledBox {
            bbox: self.forward(&b.bbox)?,
            ..b.clone()
        })
    }

    pub fn inverse_labeled(&self, b: &LabeledBox) -> Result<LabeledBox> {
        Ok(LabeledBox {
            bbox: self.inverse(&b.bbox)?,
            ..b.clone()
        })
    }
}

/// Transform for fitting a `src` `(height, width)` image into `target`.
pub fn letterbox_transform(src: (usize, usize), target: (usize, usize)) -> LetterboxTransform {
    let scale = (target.0 as f64 / src.0 as f64).min(target.1 as f64 / src.1 as f64);
    let new_h = ((src.0 as f64 * scale).round() as usize).clamp(1, target.0);
    let new_w = ((src.1 as f64 * scale).round() as usize).clamp(1, target.1);
    LetterboxTransform {
        scale,
        pad_x: ((target.1 - new_w) / 2) as f64,
        pad_y: ((target.0 - new_h) / 2) as f64,
    }
}

/// Aspect-preserving resize into `target` `(height, width)` with centered
/// neutral-gray padding. `target` must be divisible by `max_stride`.
pub fn letterbox(image: &RgbImage, target: (usize, usize), max_stride: usize) -> Result<(RgbImage, LetterboxTransform)> {
    if target.0 == 0 || target.1 == 0 || target.0 % max_stride != 0 || target.1 % max_stride != 0 {
        return Err(Error::Config(format!(
            "letterbox target {}x{} not divisible by stride {max_stride}",
            target.0, target.1
        )));
    }
    let src = (image.height() as usize, image.width() as usize);
    let t = letterbox_transform(src, target);
    if src == target {
        return Ok((image.clone(), t));
    }
    let new_h = ((src.0 as f64 * t.scale).round() as u32).clamp(1, target.0 as u32);
    let new_w = ((src.1 as f64 * t.scale).round() as u32).clamp(1, target.1 as u32);
    let resized = imageops::resize(image, new_w, new_h, imageops::FilterType::Triangle);
    let mut canvas = RgbImage::from_pixel(target.1 as u32, target.0 as u32, Rgb([PAD_GRAY; 3]));
    imageops::replace(&mut canvas, &resized, t.pad_x as i64, t.pad_y as i64);
    Ok((canvas, t))
}

/// Normalized `3 x H x W` tensor: `(v / 255 - 0.5) / 0.25`.
pub fn image_to_tensor(image: &RgbImage) -> FeatureMap {
    let (w, h) = (image.width() as usize, image.height() as usize);
    FeatureMap::from_fn(3, h, w, 1, |c, y, x| {
        (image.get_pixel(x as u32, y as u32)[c] as f64 / 255.0 - 0.5) / 0.25
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn identity_when_sizes_match() {
        let img = RgbImage::new(256, 256);
        let (out, t) = letterbox(&img, (256, 256), 32).unwrap();
        assert_eq!(t, LetterboxTransform::IDENTITY);
        assert_eq!(out.dimensions(), (256, 256));
    }

    #[test]
    fn wide_image_gets_vertical_padding() {
        // 100 rows by 200 columns
        let img = RgbImage::from_pixel(200, 100, Rgb([10, 20, 30]));
        let (out, t) = letterbox(&img, (256, 256), 32).unwrap();
        assert!((t.scale - 1.28).abs() < 1e-15);
        assert_eq!((t.pad_x, t.pad_y), (0.0, 64.0));
        assert_eq!(out.get_pixel(100, 10), &Rgb([PAD_GRAY; 3]));
        assert_eq!(out.get_pixel(100, 128), &Rgb([10, 20, 30]));
        assert_eq!(out.get_pixel(100, 250), &Rgb([PAD_GRAY; 3]));
    }

    #[test]
    fn box_round_trip() {
        let t = letterbox_transform((100, 200), (256, 256));
        let b = BBox::new(37.25, 61.5, 12.0, 7.75).unwrap();
        let back = t.inverse(&t.forward(&b).unwrap()).unwrap();
        for (x, y) in <[f64; 4]>::from(back).iter().zip(<[f64; 4]>::from(b).iter()) {
            assert!((x - y).abs() < 1e-9);
        }
    }

    #[test]
    fn rejects_indivisible_target() {
        assert!(letterbox(&RgbImage::new(10, 10), (250, 256), 32).is_err());
    }
}
