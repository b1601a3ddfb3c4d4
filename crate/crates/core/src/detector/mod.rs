//! Minimal anchor-free multi-scale detector around the attentive head.

mod checkpoint;
mod config;
mod decode;
mod loss;
mod model;
mod nms;
mod stats;
mod targets;
mod train;

pub use checkpoint::{check_compatible, Checkpoint, FORMAT_VERSION};
pub use config::{DetectorConfig, TrainConfig, STAGE_STRIDES};
pub use decode::{decode, postprocess, PRE_NMS_TOP_K};
pub use loss::{
    centerness_loss, compute_loss, focal, iou_loss, loss_and_grad, LossBundle, FOCAL_ALPHA, FOCAL_GAMMA,
};
pub use model::{Backbone, Detector, ForwardCache, Neck};
pub use nms::nms;
pub use stats::{model_stats, ModelStats};
pub use targets::{assign_targets, cell_center, centerness_target, LevelTargets, TargetMap};
pub use train::{loss_trend, LossTrend, sample_gradient, trace_csv, train, train_with_progress, LossRecord, TrainOutcome, TrainSample};
