use super::bbox::LabeledBox;
use super::geometry::iou;
use crate::error::{Error, Result};

pub const DEFAULT_IOU_THRESHOLD: f64 = 0.5;

#[derive(Debug, Clone, PartialEq)]
pub struct MatchPair {
    pub detection: usize,
    pub ground_truth: usize,
    pub iou: f64,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct MatchResult {
    pub pairs: Vec<MatchPair>,
    pub unmatched_detections: Vec<usize>,
    pub unmatched_gts: Vec<usize>,
}

/// Returns the shared image id of `boxes`, or a protocol error when they
/// disagree.
pub(crate) fn common_image_id<'a>(
    boxes: impl IntoIterator<Item = &'a LabeledBox>,
) -> Result<Option<&'a str>> {
    let mut id: Option<&str> = None;
    for b in boxes {
        match id {
            None => id = Some(&b.image_id),
            Some(prev) if prev != b.image_id => {
                return Err(Error::Protocol(format!(
                    "mixed image ids {prev:?} and {:?}",
                    b.image_id
                )))
            }
            _ => {}
        }
    }
    Ok(id)
}

/// Indices sorted by descending confidence; equal confidences keep input order.
pub(crate) fn by_confidence(dets: &[LabeledBox]) -> Vec<usize> {
    let mut order: Vec<usize> = (0..dets.len()).collect();
    order.sort_by(|&a, &b| dets[b].score().total_cmp(&dets[a].score()));
    order
}

/// Greedy per-class matching of one image's detections to its ground truth.
///
/// Detections are visited by descending confidence. Each takes the unmatched
/// ground truth of its class with the highest IoU, provided that IoU reaches
/// `iou_threshold`; ties go to the lower ground-truth index.
pub fn match_detections(
    dets: &[LabeledBox],
    gts: &[LabeledBox],
    iou_threshold: f64,
) -> Result<MatchResult> {
    common_image_id(dets.iter().chain(gts))?;
    if !(0.0..=1.0).contains(&iou_threshold) {
        return Err(Error::Protocol(format!(
            "iou threshold {iou_threshold} outside [0, 1]"
        )));
    }

    let mut gt_taken = vec![false; gts.len()];
    let mut result = MatchResult::default();
    for di in by_confidence(dets) {
        let det = &dets[di];
        let mut best: Option<(usize, f64)> = None;
        for (gi, gt) in gts.iter().enumerate() {
            if gt_taken[gi] || gt.category != det.category {
                continue;
            }
            let v = iou(&det.bbox, &gt.bbox);
            if v >= iou_threshold && best.is_none_or(|(_, bv)| v > bv) {
                best = Some((gi, v));
            }
        }
        match best {
            Some((gi, v)) => {
                gt_taken[gi] = true;
                result.pairs.push(MatchPair {
                    detection: di,
                    ground_truth: gi,
                    iou: v,
                });
            }
            None => result.unmatched_detections.push(di),
        }
    }
    result.unmatched_detections.sort_unstable();
    result.unmatched_gts = (0..gts.len()).filter(|&g| !gt_taken[g]).collect();
    Ok(result)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::boxmetrics::{BBox, Category};

    fn det(x: f64, conf: f64) -> LabeledBox {
        LabeledBox::detection("img", Category::Fire, BBox::new(x, 0.0, 2.0, 2.0).unwrap(), conf)
            .unwrap()
    }

    fn gt(x: f64) -> LabeledBox {
        LabeledBox::ground_truth("img", Category::Fire, BBox::new(x, 0.0, 2.0, 2.0).unwrap())
    }

    #[test]
    fn exact_hit() {
        let m = match_detections(&[det(0.0, 0.9)], &[gt(0.0)], 0.5).unwrap();
        assert_eq!(m.pairs.len(), 1);
        assert_eq!(m.pairs[0].iou, 1.0);
        assert!(m.unmatched_detections.is_empty() && m.unmatched_gts.is_empty());
    }

    #[test]
    fn duplicate_detection_is_false_positive() {
        let m = match_detections(&[det(0.0, 0.8), det(0.0, 0.9)], &[gt(0.0)], 0.5).unwrap();
        assert_eq!(m.pairs.len(), 1);
        assert_eq!(m.pairs[0].detection, 1);
        assert_eq!(m.unmatched_detections, vec![0]);
    }

    #[test]
    fn below_threshold_leaves_both_unmatched() {
        // Shift of 6/7 gives IoU 0.4 for 2x2 boxes.
        let m = match_detections(&[det(6.0 / 7.0, 0.9)], &[gt(0.0)], 0.5).unwrap();
        assert!(m.pairs.is_empty());
        assert_eq!(m.unmatched_detections, vec![0]);
        assert_eq!(m.unmatched_gts, vec![0]);
    }

    #[test]
    fn class_must_agree() {
        let mut d = det(0.0, 0.9);
        d.category = Category::Smoke;
        let m = match_detections(&[d], &[gt(0.0)], 0.5).unwrap();
        assert!(m.pairs.is_empty());
    }

    #[test]
    fn tie_prefers_lower_gt_index() {
        let m = match_detections(&[det(0.0, 0.9)], &[gt(0.0), gt(0.0)], 0.5).unwrap();
        assert_eq!(m.pairs[0].ground_truth, 0);
    }

    #[test]
    fn mixed_image_ids_rejected() {
        let mut g = gt(0.0);
        g.image_id = "other".into();
        assert!(matches!(
            match_detections(&[det(0.0, 0.9)], &[g], 0.5),
            Err(Error::Protocol(_))
        ));
    }
}
