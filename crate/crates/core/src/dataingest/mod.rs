//! Dataset manifests, frame extraction, splitting, letterboxing and the
//! synthetic transparent-target generator.

mod frames;
mod letterbox;
mod manifest;
mod split;
mod synth;

pub use frames::{allocate_budget, count_frames, extract_frames, extract_videos, list_videos, select_frames};
pub use letterbox::{image_to_tensor, letterbox, letterbox_transform, LetterboxTransform, PAD_GRAY};
pub use manifest::{load_manifest, save_manifest, ImageRecord, Manifest, Split};
pub use split::split_manifest;
pub use synth::{
    generate, render, render_background, synth_transparent, synth_transparent_with_contrast, Background, SynthImage, SynthSpec,
};

use image::RgbImage;

use crate::boxmetrics::LabeledBox;
use crate::detector::{DetectorConfig, TrainSample};
use crate::error::Result;

/// Letterboxes `image` to the detector input and maps its labels along.
pub fn prepare_sample(
    image_id: &str,
    image: &RgbImage,
    gts: &[LabeledBox],
    config: &DetectorConfig,
) -> Result<(TrainSample, LetterboxTransform)> {
    let (boxed, t) = letterbox(image, config.input_size, config.max_stride())?;
    let gts = gts.iter().map(|g| t.forward_labeled(g)).collect::<Result<Vec<_>>>()?;
    Ok((
        TrainSample {
            image_id: image_id.to_string(),
            image: image_to_tensor(&boxed),
            gts,
        },
        t,
    ))
}

/// Decodes any supported image file as RGB.
pub fn open_rgb(path: &std::path::Path) -> Result<RgbImage> {
    Ok(image::open(path)
        .map_err(|e| crate::error::Error::Image {
            path: path.to_path_buf(),
            source: e,
        })?
        .to_rgb8())
}

/// Loads and prepares every record of `manifest`.
pub fn load_samples(manifest: &Manifest, config: &DetectorConfig) -> Result<Vec<(TrainSample, LetterboxTransform)>> {
    manifest
        .records
        .iter()
        .map(|r| {
            let img = open_rgb(&manifest.resolve(r))?;
            prepare_sample(&r.image_id, &img, &r.annotations, config)
        })
        .collect()
}
