use super::config::DetectorConfig;
use crate::boxmetrics::{Category, LabeledBox};

/// Training targets for one pyramid level.
#[derive(Debug, Clone, PartialEq)]
pub struct LevelTargets {
    pub stride: usize,
    pub height: usize,
    pub width: usize,
    /// Class per location; `None` is background.
    pub cls: Vec<Option<Category>>,
    /// `(l, t, r, b)` in stride units; zero at background locations.
    pub reg: Vec<[f64; 4]>,
    pub centerness: Vec<f64>,
}

impl LevelTargets {
    pub fn positives(&self) -> usize {
        self.cls.iter().filter(|c| c.is_some()).count()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TargetMap {
    pub levels: Vec<LevelTargets>,
}

impl TargetMap {
    pub fn positives(&self) -> usize {
        self.levels.iter().map(LevelTargets::positives).sum()
    }
}

/// Pixel position of the center of cell `i` at `stride`.
pub fn cell_center(i: usize, stride: usize) -> f64 {
    (i as f64 + 0.5) * stride as f64
}

pub fn centerness_target(l: f64, t: f64, r: f64, b: f64) -> f64 {
    ((l.min(r) / l.max(r)) * (t.min(b) / t.max(b))).sqrt()
}

/// Anchor-free assignment: a location is positive for a box when it lies
/// strictly inside it and the largest of its four distances falls in the
/// level's `(min, max]` range. Overlaps go to the smallest box, then to the
/// lower index.
pub fn assign_targets(gts: &[LabeledBox], config: &DetectorConfig) -> TargetMap {
    let (img_h, img_w) = config.input_size;
    let clipped: Vec<(Category, [f64; 4], f64)> = gts
        .iter()
        .filter_map(|g| {
            g.bbox
                .clip(img_w as f64, img_h as f64)
                .map(|b| (g.category, b.corners(), b.area()))
        })
        .collect();

    let levels = config
        .pyramid_strides
        .iter()
        .zip(&config.level_ranges)
        .map(|(&stride, &(lo, hi))| {
            let (h, w) = (img_h / stride, img_w / stride);
            let mut lt = LevelTargets {
                stride,
                height: h,
                width: w,
                cls: vec![None; h * w],
                reg: vec![[0.0; 4]; h * w],
                centerness: vec![0.0; h * w],
            };
            for y in 0..h {
                let py = cell_center(y, stride);
                for x in 0..w {
                    let px = cell_center(x, stride);
                    let mut best: Option<(usize, f64, [f64; 4])> = None;
                    for (gi, (_, [x1, y1, x2, y2], area)) in clipped.iter().enumerate() {
                        let d = [px - x1, py - y1, x2 - px, y2 - py];
                        if d.iter().any(|v| *v <= 0.0) {
                            continue;
                        }
                        let m = d.iter().copied().fold(0.0, f64::max);
                        if m <= lo || m > hi {
                            continue;
                        }
                        if best.is_none_or(|(_, a, _)| *area < a) {
                            best = Some((gi, *area, d));
                        }
                    }
                    if let Some((gi, _, d)) = best {
                        let i = y * w + x;
                        let s = stride as f64;
                        lt.cls[i] = Some(clipped[gi].0);
                        lt.reg[i] = [d[0] / s, d[1] / s, d[2] / s, d[3] / s];
                        lt.centerness[i] = centerness_target(d[0], d[1], d[2], d[3]);
                    }
                }
            }
            lt
        })
        .collect();
    TargetMap { levels }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::boxmetrics::BBox;

    fn cfg() -> DetectorConfig {
        DetectorConfig {
            input_size: (128, 128),
            ..DetectorConfig::default()
        }
    }

    #[test]
    fn empty_scene_is_background() {
        let t = assign_targets(&[], &cfg());
        assert_eq!(t.positives(), 0);
        assert!(t.levels.iter().all(|l| l.reg.iter().all(|r| *r == [0.0; 4])));
    }

    #[test]
    fn small_centered_box_lands_on_first_level() {
        let g = LabeledBox::ground_truth("a", Category::Fire, BBox::new(64.0, 64.0, 40.0, 30.0).unwrap());
        let t = assign_targets(&[g], &cfg());
        assert!(t.levels[0].positives() > 0);
        assert_eq!(t.levels[1].positives(), 0);
        assert_eq!(t.levels[2].positives(), 0);
    }

    #[test]
    fn centerness_peaks_at_center() {
        assert_eq!(centerness_target(2.0, 3.0, 2.0, 3.0), 1.0);
        assert!((centerness_target(1.0, 1.0, 3.0, 1.0) - (1.0f64 / 3.0).sqrt()).abs() < 1e-15);
    }
}
