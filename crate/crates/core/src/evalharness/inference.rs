use image::RgbImage;

use crate::boxmetrics::LabeledBox;
use crate::dataingest::{open_rgb, prepare_sample, Manifest, SynthImage};
use crate::detector::{postprocess, Checkpoint, Detector, DetectorConfig};
use crate::error::{Error, Result};
use crate::nn::ParamSet;

/// An image with its ground truth in source pixel coordinates.
#[derive(Debug, Clone, PartialEq)]
pub struct LabeledImage {
    pub image_id: String,
    pub image: RgbImage,
    pub gts: Vec<LabeledBox>,
}

/// A named in-memory collection of labeled images.
#[derive(Debug, Clone, PartialEq)]
pub struct ImageSet {
    pub name: String,
    pub items: Vec<LabeledImage>,
}

impl ImageSet {
    pub fn from_manifest(manifest: &Manifest) -> Result<Self> {
        let items = manifest
            .records
            .iter()
            .map(|r| {
                let image = open_rgb(&manifest.resolve(r))?;
                Ok(LabeledImage {
                    image_id: r.image_id.clone(),
                    image,
                    gts: r.annotations.clone(),
                })
            })
            .collect::<Result<_>>()?;
        Ok(Self {
            name: manifest.name.clone(),
            items,
        })
    }

    pub fn from_synth(name: impl Into<String>, images: Vec<SynthImage>) -> Self {
        Self {
            name: name.into(),
            items: images
                .into_iter()
                .map(|s| LabeledImage {
                    image_id: s.image_id,
                    image: s.image,
                    gts: s.annotations,
                })
                .collect(),
        }
    }

    pub fn ground_truth(&self) -> crate::boxmetrics::BoxesByImage {
        self.items.iter().map(|i| (i.image_id.clone(), i.gts.clone())).collect()
    }
}

/// Letterbox, detect, and map detections back to source pixels.
pub fn detect_image(detector: &Detector, params: &ParamSet, image_id: &str, image: &RgbImage) -> Result<Vec<LabeledBox>> {
    let (sample, t) = prepare_sample(image_id, image, &[], &detector.config)?;
    let outs = detector.predict(params, &sample.image)?;
    let (w, h) = (image.width() as f64, image.height() as f64);
    let mut out = Vec::new();
    for d in postprocess(&outs, &detector.config, image_id)? {
        let b = t.inverse(&d.bbox)?;
        if let Some(bbox) = b.clip(w, h) {
            out.push(LabeledBox { bbox, ..d });
        }
    }
    Ok(out)
}

/// Detections for every image of `set`, ordered by image id.
pub fn infer_set(detector: &Detector, params: &ParamSet, set: &ImageSet) -> Result<Vec<LabeledBox>> {
    let mut items: Vec<&LabeledImage> = set.items.iter().collect();
    items.sort_by(|a, b| a.image_id.cmp(&b.image_id));
    let mut out = Vec::new();
    for it in items {
        out.extend(detect_image(detector, params, &it.image_id, &it.image)?);
    }
    Ok(out)
}

/// Runs the checkpoint over every manifest image.
///
/// The checkpoint's parameters must have exactly the layout `config` builds;
/// post-processing settings come from `config`.
pub fn run_inference(checkpoint: &Checkpoint, manifest: &Manifest, config: &DetectorConfig) -> Result<Vec<LabeledBox>> {
    let detector = Detector::new(config)?;
    crate::detector::check_compatible(&detector.init_params(0)?, &checkpoint.params)?;
    if checkpoint.config.input_size != config.input_size {
        return Err(Error::Config(format!(
            "checkpoint was trained at {:?}, configuration asks for {:?}",
            checkpoint.config.input_size, config.input_size
        )));
    }
    let set = ImageSet::from_manifest(manifest)?;
    infer_set(&detector, &checkpoint.params, &set)
}
