use super::config::DetectorConfig;
use super::nms::nms;
use super::targets::cell_center;
use crate::atdh::HeadOutput;
use crate::boxmetrics::{BBox, Category, LabeledBox};
use crate::error::Result;
use crate::nn::sigmoid;

/// Candidates kept per image before suppression.
pub const PRE_NMS_TOP_K: usize = 1000;

/// Converts head outputs into scored boxes.
///
/// A location's score for a class is `sigmoid(cls) * sigmoid(centerness)`;
/// locations scoring at least `score_threshold` become boxes clipped to the
/// input. Boxes that clip to nothing are dropped. Output is ordered by
/// descending score.
pub fn decode(outputs: &[HeadOutput], config: &DetectorConfig, image_id: &str) -> Vec<LabeledBox> {
    let (img_h, img_w) = config.input_size;
    let mut out = Vec::new();
    for o in outputs {
        let (h, w, stride) = (o.height(), o.width(), o.stride());
        let plane = h * w;
        let s = stride as f64;
        for y in 0..h {
            for x in 0..w {
                let i = y * w + x;
                let ctr = sigmoid(o.centerness.data()[i]);
                for c in 0..o.cls_logits.channels() {
                    let score = sigmoid(o.cls_logits.data()[c * plane + i]) * ctr;
                    if score < config.score_threshold {
                        continue;
                    }
                    let Some(category) = Category::from_index(c) else {
                        continue;
                    };
                    let (px, py) = (cell_center(x, stride), cell_center(y, stride));
                    let d = [0, 1, 2, 3].map(|j| o.reg.data()[j * plane + i] * s);
                    let clipped = BBox::from_corners(px - d[0], py - d[1], px + d[2], py + d[3])
                        .ok()
                        .and_then(|b| b.clip(img_w as f64, img_h as f64));
                    if let Some(bbox) = clipped {
                        out.push(LabeledBox {
                            bbox,
                            category,
                            confidence: Some(score.clamp(0.0, 1.0)),
                            image_id: image_id.to_string(),
                        });
                    }
                }
            }
        }
    }
    let order = crate::boxmetrics::by_confidence(&out);
    let mut sorted: Vec<LabeledBox> = order.into_iter().map(|i| out[i].clone()).collect();
    sorted.truncate(PRE_NMS_TOP_K);
    sorted
}

/// Decode, suppress, and cap at `max_detections`.
pub fn postprocess(outputs: &[HeadOutput], config: &DetectorConfig, image_id: &str) -> Result<Vec<LabeledBox>> {
    let mut kept = nms(&decode(outputs, config, image_id), config.nms_iou)?;
    kept.truncate(config.max_detections);
    Ok(kept)
}
