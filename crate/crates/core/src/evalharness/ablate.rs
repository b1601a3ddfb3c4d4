use serde::{Deserialize, Serialize};

use super::inference::{infer_set, ImageSet};
use crate::boxmetrics::{evaluate, group_by_image, BIWeights, Category};
use crate::dataingest::prepare_sample;
use crate::detector::{train, Detector, DetectorConfig, TrainConfig, TrainSample};
use crate::error::{Error, Result};

/// One head configuration under comparison.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Variant {
    pub label: String,
    pub attention_enabled: bool,
}

impl Variant {
    pub fn atdh() -> Self {
        Self {
            label: "ATDH".into(),
            attention_enabled: true,
        }
    }

    pub fn baseline() -> Self {
        Self {
            label: "baseline (no attention)".into(),
            attention_enabled: false,
        }
    }

    pub fn is_baseline(&self) -> bool {
        !self.attention_enabled
    }

    pub fn apply(&self, config: &DetectorConfig) -> DetectorConfig {
        let mut c = config.clone();
        c.head.attention_enabled = self.attention_enabled;
        c
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SeedRun {
    pub seed: u64,
    pub fire_ap: f64,
    pub smoke_ap: f64,
    /// Mean of the two class APs.
    pub map: f64,
    pub final_loss: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Spread {
    pub mean: f64,
    pub min: f64,
    pub max: f64,
}

impl Spread {
    fn of(values: &[f64]) -> Option<Self> {
        if values.is_empty() {
            return None;
        }
        Some(Self {
            mean: values.iter().sum::<f64>() / values.len() as f64,
            min: values.iter().cloned().fold(f64::INFINITY, f64::min),
            max: values.iter().cloned().fold(f64::NEG_INFINITY, f64::max),
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AblationRow {
    pub variant: Variant,
    pub dataset: String,
    pub runs: Vec<SeedRun>,
    /// Seeds whose training diverged, with the diagnostic.
    pub failed: Vec<(u64, String)>,
    pub fire: Option<Spread>,
    pub smoke: Option<Spread>,
    /// Mean is exactly `(fire.mean + smoke.mean) / 2`.
    pub map: Option<Spread>,
}

impl AblationRow {
    fn new(variant: Variant, dataset: &str, runs: Vec<SeedRun>, failed: Vec<(u64, String)>) -> Self {
        let col = |f: fn(&SeedRun) -> f64| runs.iter().map(f).collect::<Vec<_>>();
        let fire = Spread::of(&col(|r| r.fire_ap));
        let smoke = Spread::of(&col(|r| r.smoke_ap));
        let map = Spread::of(&col(|r| r.map)).map(|s| Spread {
            mean: (fire.unwrap().mean + smoke.unwrap().mean) / 2.0,
            ..s
        });
        Self {
            variant,
            dataset: dataset.to_string(),
            runs,
            failed,
            fire,
            smoke,
            map,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AblationTable {
    pub rows: Vec<AblationRow>,
}

fn cell(s: &Option<Spread>, failed: usize) -> String {
    let flag = if failed > 0 { format!(" !{failed} failed") } else { String::new() };
    match s {
        Some(s) => format!("{:.1} [{:.1}, {:.1}]{flag}", 100.0 * s.mean, 100.0 * s.min, 100.0 * s.max),
        None => format!("n/a{flag}"),
    }
}

impl AblationTable {
    pub fn row(&self, label: &str) -> Option<&AblationRow> {
        self.rows.iter().find(|r| r.variant.label == label)
    }

    pub fn baseline(&self) -> Option<&AblationRow> {
        self.rows.iter().find(|r| r.variant.is_baseline())
    }

    /// Text table: mean AP in percent with the seed range in brackets.
    pub fn to_text(&self) -> String {
        let label = |r: &AblationRow| {
            if r.variant.is_baseline() {
                format!("{} [baseline]", r.variant.label)
            } else {
                r.variant.label.clone()
            }
        };
        let lw = self.rows.iter().map(|r| label(r).len()).max().unwrap_or(0).max(4);
        let dw = self.rows.iter().map(|r| r.dataset.len()).max().unwrap_or(0).max(7);
        let mut s = format!("{:<lw$}  {:<dw$}  {:<22}  {:<22}  {:<22}\n", "Head", "Dataset", "Fire", "Smoke", "mAP");
        for r in &self.rows {
            let n = r.failed.len();
            s.push_str(&format!(
                "{:<lw$}  {:<dw$}  {:<22}  {:<22}  {:<22}\n",
                label(r),
                r.dataset,
                cell(&r.fire, n),
                cell(&r.smoke, n),
                cell(&r.map, n)
            ));
        }
        s.trim_end_matches(' ').to_string()
    }

    /// One JSON object per row.
    pub fn to_jsonl(&self) -> Result<String> {
        let mut s = String::new();
        for r in &self.rows {
            s.push_str(&serde_json::to_string(r).map_err(|e| Error::Schema(e.to_string()))?);
            s.push('\n');
        }
        Ok(s)
    }
}

fn samples_for(set: &ImageSet, config: &DetectorConfig) -> Result<Vec<TrainSample>> {
    set.items
        .iter()
        .map(|i| Ok(prepare_sample(&i.image_id, &i.image, &i.gts, config)?.0))
        .collect()
}

/// Trains every variant with every seed on `train_set`, scores each run on
/// `test_set`, and aggregates per variant.
///
/// Variants share the initialization and data order of a given seed. A run
/// that diverges is recorded in its row instead of aborting the table.
#[allow(clippy::too_many_arguments)]
pub fn ablate(
    train_set: &ImageSet,
    test_set: &ImageSet,
    config: &DetectorConfig,
    tcfg: &TrainConfig,
    variants: &[Variant],
    seeds: &[u64],
    iou_threshold: f64,
    mut on_run: impl FnMut(&Variant, u64, Option<&SeedRun>),
) -> Result<AblationTable> {
    if variants.is_empty() {
        return Err(Error::Protocol("ablation needs at least one variant".into()));
    }
    if seeds.is_empty() {
        return Err(Error::Protocol("ablation needs at least one seed".into()));
    }
    let gts = test_set.ground_truth();
    for c in Category::ALL {
        if !gts.values().flatten().any(|g| g.category == c) {
            return Err(Error::Protocol(format!("test set {:?} has no {c} ground truth", test_set.name)));
        }
    }
    let samples = samples_for(train_set, config)?;
    let mut rows = Vec::with_capacity(variants.len());
    for v in variants {
        let cfg = v.apply(config);
        let detector = Detector::new(&cfg)?;
        let mut runs = Vec::new();
        let mut failed = Vec::new();
        for &seed in seeds {
            let outcome = match train(&samples, &cfg, tcfg, seed) {
                Ok(o) => o,
                Err(e) if e.is_numeric() => {
                    failed.push((seed, e.to_string()));
                    on_run(v, seed, None);
                    continue;
                }
                Err(e) => return Err(e),
            };
            let dets = infer_set(&detector, &outcome.checkpoint.params, test_set)?;
            let rep = evaluate(&group_by_image(dets), &gts, iou_threshold, BIWeights::default())?;
            let fire_ap = rep.ap(Category::Fire).unwrap_or(0.0);
            let smoke_ap = rep.ap(Category::Smoke).unwrap_or(0.0);
            let run = SeedRun {
                seed,
                fire_ap,
                smoke_ap,
                map: (fire_ap + smoke_ap) / 2.0,
                final_loss: outcome.trace.last().map_or(f64::NAN, |r| r.total),
            };
            on_run(v, seed, Some(&run));
            runs.push(run);
        }
        rows.push(AblationRow::new(v.clone(), &train_set.name, runs, failed));
    }
    Ok(AblationTable { rows })
}
