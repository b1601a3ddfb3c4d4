use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};

use super::ap::ap_11point;
use super::bbox::{Category, LabeledBox};
use super::geometry::{burning_intensity, BIWeights};
use super::matching::match_detections;
use crate::error::{Error, Result};

pub type BoxesByImage = BTreeMap<String, Vec<LabeledBox>>;

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Counts {
    pub images: usize,
    pub gts: usize,
    pub dets: usize,
}

/// Dataset-level detection quality.
///
/// Classes without any ground truth have no AP entry and do not enter the
/// mean. `avg_bi` is `None` when no detection was matched.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub ap_per_class: BTreeMap<Category, f64>,
    pub map: f64,
    pub avg_bi: Option<f64>,
    pub matched_pairs: usize,
    pub counts: Counts,
}

impl EvalReport {
    pub fn ap(&self, c: Category) -> Option<f64> {
        self.ap_per_class.get(&c).copied()
    }
}

/// Per-class AP, mAP, and the mean burning intensity of matched pairs.
pub fn evaluate(
    dets_by_image: &BoxesByImage,
    gts_by_image: &BoxesByImage,
    iou_threshold: f64,
    weights: BIWeights,
) -> Result<EvalReport> {
    if let Some(id) = dets_by_image.keys().find(|k| !gts_by_image.contains_key(*k)) {
        return Err(Error::Protocol(format!(
            "detections for image {id:?} which has no ground-truth entry"
        )));
    }
    let ids: BTreeSet<&String> = gts_by_image.keys().collect();

    let mut flags: BTreeMap<Category, Vec<(f64, bool)>> = BTreeMap::new();
    let mut gt_counts: BTreeMap<Category, usize> = BTreeMap::new();
    let mut bi_sum = 0.0;
    let mut pairs = 0usize;
    let mut counts = Counts {
        images: ids.len(),
        ..Counts::default()
    };
    let empty = Vec::new();

    for id in ids {
        let gts = &gts_by_image[id];
        let dets = dets_by_image.get(id).unwrap_or(&empty);
        for b in gts.iter().chain(dets) {
            if &b.image_id != id {
                return Err(Error::Protocol(format!(
                    "box tagged {:?} stored under image {id:?}",
                    b.image_id
                )));
            }
        }
        if let Some(d) = dets.iter().find(|d| d.confidence.is_none()) {
            return Err(Error::Protocol(format!(
                "detection without confidence in image {:?}",
                d.image_id
            )));
        }
        counts.gts += gts.len();
        counts.dets += dets.len();
        for g in gts {
            *gt_counts.entry(g.category).or_default() += 1;
        }

        let m = match_detections(dets, gts, iou_threshold)?;
        let mut is_tp = vec![false; dets.len()];
        for p in &m.pairs {
            is_tp[p.detection] = true;
            bi_sum += burning_intensity(&dets[p.detection].bbox, &gts[p.ground_truth].bbox, weights);
            pairs += 1;
        }
        for (d, tp) in dets.iter().zip(is_tp) {
            flags.entry(d.category).or_default().push((d.score(), tp));
        }
    }

    let mut ap_per_class = BTreeMap::new();
    for c in Category::ALL {
        let n = gt_counts.get(&c).copied().unwrap_or(0);
        if n == 0 {
            continue;
        }
        let f = flags.get(&c).map(Vec::as_slice).unwrap_or(&[]);
        ap_per_class.insert(c, ap_11point(f, n)?);
    }
    let map = if ap_per_class.is_empty() {
        0.0
    } else {
        ap_per_class.values().sum::<f64>() / ap_per_class.len() as f64
    };
    Ok(EvalReport {
        ap_per_class,
        map,
        avg_bi: (pairs > 0).then(|| bi_sum / pairs as f64),
        matched_pairs: pairs,
        counts,
    })
}

/// Groups boxes by image id, preserving per-image input order.
pub fn group_by_image(boxes: impl IntoIterator<Item = LabeledBox>) -> BoxesByImage {
    let mut out = BoxesByImage::new();
    for b in boxes {
        out.entry(b.image_id.clone()).or_default().push(b);
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::boxmetrics::BBox;

    fn gt(id: &str, c: Category, x: f64) -> LabeledBox {
        LabeledBox::ground_truth(id, c, BBox::new(x, 10.0, 4.0, 4.0).unwrap())
    }

    fn as_det(g: &LabeledBox, conf: f64) -> LabeledBox {
        LabeledBox::detection(g.image_id.clone(), g.category, g.bbox, conf).unwrap()
    }

    #[test]
    fn perfect_predictions() {
        let gts = vec![
            gt("a", Category::Fire, 5.0),
            gt("a", Category::Smoke, 20.0),
            gt("b", Category::Smoke, 5.0),
        ];
        let dets: Vec<_> = gts.iter().map(|g| as_det(g, 0.9)).collect();
        let r = evaluate(&group_by_image(dets), &group_by_image(gts), 0.5, BIWeights::default())
            .unwrap();
        assert_eq!(r.map, 1.0);
        assert_eq!(r.avg_bi, Some(1.0));
        assert_eq!(r.counts, Counts { images: 2, gts: 3, dets: 3 });
    }

    #[test]
    fn empty_detections() {
        let gts = group_by_image(vec![gt("a", Category::Fire, 5.0)]);
        let r = evaluate(&BoxesByImage::new(), &gts, 0.5, BIWeights::default()).unwrap();
        assert_eq!(r.map, 0.0);
        assert_eq!(r.avg_bi, None);
    }

    #[test]
    fn unknown_image_rejected() {
        let gts = group_by_image(vec![gt("a", Category::Fire, 5.0)]);
        let dets = group_by_image(vec![as_det(&gt("zzz", Category::Fire, 5.0), 0.5)]);
        assert!(evaluate(&dets, &gts, 0.5, BIWeights::default()).is_err());
    }
}
