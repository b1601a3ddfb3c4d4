//! Flat `key = value` run configuration.
//!
//! Settings merge in three layers: built-in defaults, then a config file, then
//! command-line overrides. Every key is checked against a fixed schema, so a
//! typo is an error rather than a silently ignored line.

use std::path::Path;

use crate::atdh::HeadLayout;
use crate::boxmetrics::{BIWeights, DEFAULT_IOU_THRESHOLD};
use crate::dataingest::{Background, SynthSpec};
use crate::detector::{DetectorConfig, TrainConfig};
use crate::error::{Error, Result};
use crate::util::sha256_hex;

#[derive(Debug, Clone, PartialEq)]
pub struct EvalSettings {
    pub iou_threshold: f64,
    pub bi_w1: f64,
    pub bi_w2: f64,
}

impl Default for EvalSettings {
    fn default() -> Self {
        let w = BIWeights::default();
        Self {
            iou_threshold: DEFAULT_IOU_THRESHOLD,
            bi_w1: w.area_weight(),
            bi_w2: w.iou_weight(),
        }
    }
}

impl EvalSettings {
    pub fn weights(&self) -> Result<BIWeights> {
        BIWeights::new(self.bi_w1, self.bi_w2)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct IngestSettings {
    pub train_fraction: f64,
    /// Total frames retained across all videos.
    pub frame_budget: usize,
}

impl Default for IngestSettings {
    fn default() -> Self {
        Self {
            train_fraction: 0.7,
            frame_budget: 3000,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct RunConfig {
    pub seed: u64,
    pub detector: DetectorConfig,
    pub train: TrainConfig,
    pub synth: SynthSpec,
    pub eval: EvalSettings,
    pub ingest: IngestSettings,
}

/// Every accepted key, in canonical order.
pub const KEYS: &[&str] = &[
    "seed",
    "input_size",
    "pyramid_strides",
    "level_ranges",
    "backbone_widths",
    "head_channels",
    "tower_depth",
    "attention",
    "rescale_by_c",
    "head_layout",
    "score_threshold",
    "nms_iou",
    "max_detections",
    "steps",
    "batch_size",
    "learning_rate",
    "momentum",
    "weight_decay",
    "warmup_steps",
    "grad_clip",
    "flip",
    "synth_count",
    "synth_size",
    "synth_alpha",
    "synth_objects",
    "synth_object_size",
    "synth_background",
    "iou_threshold",
    "bi_w1",
    "bi_w2",
    "train_fraction",
    "frame_budget",
];

fn bad(key: &str, value: &str, expected: &str) -> Error {
    Error::Config(format!("{key} = {value:?}: expected {expected}"))
}

fn num<T: std::str::FromStr>(key: &str, value: &str) -> Result<T> {
    value.trim().parse().map_err(|_| bad(key, value, "a number"))
}

fn flag(key: &str, value: &str) -> Result<bool> {
    match value.trim() {
        "true" | "on" | "1" => Ok(true),
        "false" | "off" | "0" => Ok(false),
        _ => Err(bad(key, value, "true or false")),
    }
}

fn list<T: std::str::FromStr>(key: &str, value: &str) -> Result<Vec<T>> {
    value.split(',').map(|v| num(key, v)).collect()
}

fn pair<T: std::str::FromStr + Copy>(key: &str, value: &str, sep: char) -> Result<(T, T)> {
    let parts: Vec<&str> = value.split(sep).collect();
    match parts[..] {
        [a, b] => Ok((num(key, a)?, num(key, b)?)),
        _ => Err(bad(key, value, &format!("two values separated by '{sep}'"))),
    }
}

/// Parses `HxW`.
pub fn parse_size(value: &str) -> Result<(usize, usize)> {
    pair("size", value, 'x')
}

fn join<T: ToString>(v: &[T]) -> String {
    v.iter().map(|x| x.to_string()).collect::<Vec<_>>().join(",")
}

fn fmt_ranges(ranges: &[(f64, f64)]) -> String {
    ranges
        .iter()
        .map(|(lo, hi)| {
            let hi = if hi.is_infinite() { "inf".to_string() } else { hi.to_string() };
            format!("{lo}:{hi}")
        })
        .collect::<Vec<_>>()
        .join(",")
}

fn parse_ranges(key: &str, value: &str) -> Result<Vec<(f64, f64)>> {
    value
        .split(',')
        .map(|r| {
            let (lo, hi) = r.split_once(':').ok_or_else(|| bad(key, value, "lo:hi,..."))?;
            let hi = if hi.trim() == "inf" { f64::INFINITY } else { num(key, hi)? };
            Ok((num(key, lo)?, hi))
        })
        .collect()
}

impl RunConfig {
    /// Applies one setting. Cross-field checks happen in [`RunConfig::validate`].
    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        let v = value.trim();
        let d = &mut self.detector;
        let t = &mut self.train;
        let s = &mut self.synth;
        match key {
            "seed" => self.seed = num(key, v)?,
            "input_size" => d.input_size = pair(key, v, 'x')?,
            "pyramid_strides" => d.pyramid_strides = list(key, v)?,
            "level_ranges" => d.level_ranges = parse_ranges(key, v)?,
            "backbone_widths" => d.backbone_widths = list(key, v)?,
            "head_channels" => d.head.channels = num(key, v)?,
            "tower_depth" => d.head.tower_depth = num(key, v)?,
            "attention" => d.head.attention_enabled = flag(key, v)?,
            "rescale_by_c" => d.head.rescale_by_c = flag(key, v)?,
            "head_layout" => d.head.layout = v.parse()?,
            "score_threshold" => d.score_threshold = num(key, v)?,
            "nms_iou" => d.nms_iou = num(key, v)?,
            "max_detections" => d.max_detections = num(key, v)?,
            "steps" => t.steps = num(key, v)?,
            "batch_size" => t.batch_size = num(key, v)?,
            "learning_rate" => t.learning_rate = num(key, v)?,
            "momentum" => t.momentum = num(key, v)?,
            "weight_decay" => t.weight_decay = num(key, v)?,
            "warmup_steps" => t.warmup_steps = num(key, v)?,
            "grad_clip" => t.grad_clip = num(key, v)?,
            "flip" => t.flip = flag(key, v)?,
            "synth_count" => s.count = num(key, v)?,
            "synth_size" => s.image_size = pair(key, v, 'x')?,
            "synth_alpha" => s.alpha_range = pair(key, v, ',')?,
            "synth_objects" => s.objects_per_image = pair(key, v, ',')?,
            "synth_object_size" => s.size_range = pair(key, v, ',')?,
            "synth_background" => s.background = v.parse()?,
            "iou_threshold" => self.eval.iou_threshold = num(key, v)?,
            "bi_w1" => self.eval.bi_w1 = num(key, v)?,
            "bi_w2" => self.eval.bi_w2 = num(key, v)?,
            "train_fraction" => self.ingest.train_fraction = num(key, v)?,
            "frame_budget" => self.ingest.frame_budget = num(key, v)?,
            _ => return Err(Error::Config(format!("unknown config key {key:?}"))),
        }
        Ok(())
    }

    /// Canonical `(key, value)` listing; parsing it back yields `self`.
    pub fn entries(&self) -> Vec<(&'static str, String)> {
        let d = &self.detector;
        let t = &self.train;
        let s = &self.synth;
        let layout = match d.head.layout {
            HeadLayout::Shared => "shared",
            HeadLayout::PerBranch => "per_branch",
        };
        let background = match s.background {
            Background::Solid => "solid",
            Background::Gradient => "gradient",
            Background::Textured => "textured",
        };
        vec![
            ("seed", self.seed.to_string()),
            ("input_size", format!("{}x{}", d.input_size.0, d.input_size.1)),
            ("pyramid_strides", join(&d.pyramid_strides)),
            ("level_ranges", fmt_ranges(&d.level_ranges)),
            ("backbone_widths", join(&d.backbone_widths)),
            ("head_channels", d.head.channels.to_string()),
            ("tower_depth", d.head.tower_depth.to_string()),
            ("attention", d.head.attention_enabled.to_string()),
            ("rescale_by_c", d.head.rescale_by_c.to_string()),
            ("head_layout", layout.to_string()),
            ("score_threshold", d.score_threshold.to_string()),
            ("nms_iou", d.nms_iou.to_string()),
            ("max_detections", d.max_detections.to_string()),
            ("steps", t.steps.to_string()),
            ("batch_size", t.batch_size.to_string()),
            ("learning_rate", t.learning_rate.to_string()),
            ("momentum", t.momentum.to_string()),
            ("weight_decay", t.weight_decay.to_string()),
            ("warmup_steps", t.warmup_steps.to_string()),
            ("grad_clip", t.grad_clip.to_string()),
            ("flip", t.flip.to_string()),
            ("synth_count", s.count.to_string()),
            ("synth_size", format!("{}x{}", s.image_size.0, s.image_size.1)),
            ("synth_alpha", format!("{},{}", s.alpha_range.0, s.alpha_range.1)),
            ("synth_objects", format!("{},{}", s.objects_per_image.0, s.objects_per_image.1)),
            ("synth_object_size", format!("{},{}", s.size_range.0, s.size_range.1)),
            ("synth_background", background.to_string()),
            ("iou_threshold", self.eval.iou_threshold.to_string()),
            ("bi_w1", self.eval.bi_w1.to_string()),
            ("bi_w2", self.eval.bi_w2.to_string()),
            ("train_fraction", self.ingest.train_fraction.to_string()),
            ("frame_budget", self.ingest.frame_budget.to_string()),
        ]
    }

    pub fn validate(&self) -> Result<()> {
        self.detector.validate()?;
        self.train.validate()?;
        self.synth.validate()?;
        self.eval.weights()?;
        if !(self.eval.iou_threshold > 0.0 && self.eval.iou_threshold <= 1.0) {
            return Err(Error::Config(format!(
                "iou_threshold {} must lie in (0, 1]",
                self.eval.iou_threshold
            )));
        }
        if !(self.ingest.train_fraction > 0.0 && self.ingest.train_fraction < 1.0) {
            return Err(Error::Config("train_fraction must lie strictly between 0 and 1".into()));
        }
        if self.ingest.frame_budget == 0 {
            return Err(Error::Config("frame_budget must be at least 1".into()));
        }
        Ok(())
    }

    /// Applies the lines of a config file on top of `self`.
    pub fn apply_text(&mut self, text: &str, path: &Path) -> Result<()> {
        for (i, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let parse_err = |msg: String| Error::Parse {
                path: path.to_path_buf(),
                line: i + 1,
                msg,
            };
            let (k, v) = line
                .split_once('=')
                .ok_or_else(|| parse_err(format!("expected key = value, got {line:?}")))?;
            self.set(k.trim(), v).map_err(|e| parse_err(e.to_string()))?;
        }
        Ok(())
    }

    /// Defaults, then `file`, then `overrides`, then validation.
    pub fn load(file: Option<&Path>, overrides: &[(String, String)]) -> Result<Self> {
        let mut cfg = Self::default();
        if let Some(path) = file {
            let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
            cfg.apply_text(&text, path)?;
        }
        for (k, v) in overrides {
            cfg.set(k, v)?;
        }
        cfg.synth.seed = cfg.seed;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn to_text(&self) -> String {
        self.entries().iter().map(|(k, v)| format!("{k} = {v}\n")).collect()
    }

    /// SHA-256 of the canonical text form.
    pub fn digest(&self) -> String {
        sha256_hex(self.to_text().as_bytes())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn canonical_text_round_trips() {
        let mut cfg = RunConfig::default();
        cfg.set("input_size", "128x192").unwrap();
        cfg.set("head_layout", "per_branch").unwrap();
        cfg.set("synth_alpha", "0.2,0.4").unwrap();
        cfg.set("level_ranges", "0:32,32:96,96:inf").unwrap();
        let mut back = RunConfig::default();
        back.apply_text(&cfg.to_text(), Path::new("x.cfg")).unwrap();
        assert_eq!(back, cfg);
        assert_eq!(back.digest(), cfg.digest());
    }

    #[test]
    fn every_key_is_listed_and_settable() {
        let cfg = RunConfig::default();
        let listed: Vec<&str> = cfg.entries().iter().map(|e| e.0).collect();
        assert_eq!(listed, KEYS);
        let mut other = RunConfig::default();
        for (k, v) in cfg.entries() {
            other.set(k, &v).unwrap();
        }
        assert_eq!(other, cfg);
    }

    #[test]
    fn unknown_key_reports_line() {
        let err = RunConfig::default()
            .apply_text("seed = 3\n# note\nlearnin_rate = 0.1\n", Path::new("run.cfg"))
            .unwrap_err();
        assert!(matches!(err, Error::Parse { line: 3, .. }), "{err}");
    }

    #[test]
    fn overrides_beat_file() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("run.cfg");
        std::fs::write(&path, "steps = 40\nseed = 5\n").unwrap();
        let cfg = RunConfig::load(Some(&path), &[("steps".into(), "7".into())]).unwrap();
        assert_eq!(cfg.train.steps, 7);
        assert_eq!(cfg.seed, 5);
        assert_eq!(cfg.synth.seed, 5);
    }

    #[test]
    fn weights_must_sum_to_one() {
        let over = [("bi_w1".to_string(), "0.7".to_string()), ("bi_w2".to_string(), "0.7".to_string())];
        assert!(RunConfig::load(None, &over).is_err());
        let ok = [("bi_w1".to_string(), "1".to_string()), ("bi_w2".to_string(), "0".to_string())];
        assert!(RunConfig::load(None, &ok).is_ok());
    }

    #[test]
    fn bad_values_rejected() {
        let mut cfg = RunConfig::default();
        assert!(cfg.set("flip", "maybe").is_err());
        assert!(cfg.set("input_size", "128").is_err());
        assert!(cfg.set("head_layout", "stacked").is_err());
    }
}
