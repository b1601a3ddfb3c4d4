//! Box geometry, burning intensity, detection matching and VOC-style AP.

mod ap;
mod bbox;
mod eval;
mod geometry;
mod matching;
mod records;

pub use ap::{ap_11point, RECALL_POINTS};
pub use bbox::{BBox, Category, LabeledBox};
pub use eval::{evaluate, group_by_image, BoxesByImage, Counts, EvalReport};
pub use geometry::{area, area_diff_norm, burning_intensity, iou, BIWeights};
pub use matching::{match_detections, MatchPair, MatchResult, DEFAULT_IOU_THRESHOLD};
pub(crate) use matching::{by_confidence, common_image_id};
pub use records::{
    format_record, parse_record, parse_records, read_records, to_records_string, write_records,
};
