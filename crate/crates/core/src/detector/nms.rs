use crate::boxmetrics::{by_confidence, common_image_id, iou, LabeledBox};
use crate::error::Result;

/// Greedy per-class non-maximum suppression.
///
/// Boxes are visited by descending confidence (insertion order breaks ties);
/// a box is dropped when its IoU with an already kept box of the same class
/// exceeds `iou_threshold`. The result keeps that visiting order.
pub fn nms(dets: &[LabeledBox], iou_threshold: f64) -> Result<Vec<LabeledBox>> {
    common_image_id(dets)?;
    let mut kept: Vec<&LabeledBox> = Vec::new();
    for i in by_confidence(dets) {
        let d = &dets[i];
        let suppressed = kept
            .iter()
            .any(|k| k.category == d.category && iou(&k.bbox, &d.bbox) > iou_threshold);
        if !suppressed {
            kept.push(d);
        }
    }
    Ok(kept.into_iter().cloned().collect())
}
