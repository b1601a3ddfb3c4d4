//! Inference over manifests, reports, head ablations and class activation maps.

mod ablate;
mod cam;
mod inference;
mod report;
mod run;

pub use ablate::{ablate, AblationRow, AblationTable, SeedRun, Spread, Variant};
pub use cam::{cam, cam_tensor, CamOutput, Heatmap};
pub use inference::{detect_image, infer_set, run_inference, ImageSet, LabeledImage};
pub use report::{format_jsonl, format_table, report, write_report};
pub use run::{config_digest, read_repro, run_dir, write_repro, Repro, RunRecord, REPRO_FILE};
