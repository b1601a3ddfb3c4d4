use std::path::Path;

use serde::Serialize;

use crate::boxmetrics::{evaluate, group_by_image, BIWeights, Category, EvalReport, LabeledBox};
use crate::dataingest::Manifest;
use crate::error::Result;
use crate::util::write_atomic;

/// Scores a detection store against the manifest's ground truth.
pub fn report(store: &[LabeledBox], manifest: &Manifest, weights: BIWeights, iou_threshold: f64) -> Result<EvalReport> {
    evaluate(&group_by_image(store.iter().cloned()), &manifest.ground_truth(), iou_threshold, weights)
}

fn pct(v: Option<f64>) -> String {
    v.map_or_else(|| "-".to_string(), |x| format!("{:.1}", 100.0 * x))
}

/// Aligned text table with Fire, Smoke, mAP and avg BI columns.
pub fn format_table(rows: &[(&str, &EvalReport)]) -> String {
    let width = rows.iter().map(|r| r.0.len()).max().unwrap_or(0).max(5);
    let mut s = format!("{:<width$}  {:>6}  {:>6}  {:>6}  {:>6}\n", "Model", "Fire", "Smoke", "mAP", "avg BI");
    for (label, r) in rows {
        s.push_str(&format!(
            "{:<width$}  {:>6}  {:>6}  {:>6}  {:>6}\n",
            label,
            pct(r.ap(Category::Fire)),
            pct(r.ap(Category::Smoke)),
            pct(Some(r.map)),
            r.avg_bi.map_or_else(|| "-".to_string(), |b| format!("{b:.4}")),
        ));
    }
    s
}

#[derive(Serialize)]
struct ReportLine<'a> {
    model: &'a str,
    fire_ap: Option<f64>,
    smoke_ap: Option<f64>,
    map: f64,
    avg_bi: Option<f64>,
    matched_pairs: usize,
    images: usize,
    gts: usize,
    dets: usize,
}

/// One JSON object per row.
pub fn format_jsonl(rows: &[(&str, &EvalReport)]) -> Result<String> {
    let mut s = String::new();
    for (label, r) in rows {
        let line = ReportLine {
            model: label,
            fire_ap: r.ap(Category::Fire),
            smoke_ap: r.ap(Category::Smoke),
            map: r.map,
            avg_bi: r.avg_bi,
            matched_pairs: r.matched_pairs,
            images: r.counts.images,
            gts: r.counts.gts,
            dets: r.counts.dets,
        };
        s.push_str(&serde_json::to_string(&line).map_err(|e| crate::Error::Schema(e.to_string()))?);
        s.push('\n');
    }
    Ok(s)
}

/// Writes `report.txt` and `report.jsonl` into `dir`.
pub fn write_report(dir: &Path, label: &str, r: &EvalReport) -> Result<()> {
    let rows = [(label, r)];
    write_atomic(&dir.join("report.txt"), format_table(&rows).as_bytes())?;
    write_atomic(&dir.join("report.jsonl"), format_jsonl(&rows)?.as_bytes())
}
