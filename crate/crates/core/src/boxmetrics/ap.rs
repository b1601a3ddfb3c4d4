use crate::error::{Error, Result};

/// Number of canonical recall points in VOC-style interpolated AP.
pub const RECALL_POINTS: usize = 11;

/// 11-point interpolated average precision.
///
/// `scored_flags` holds `(confidence, is_true_positive)` for every detection
/// of one class across a dataset. Returns 0 when there is no ground truth.
pub fn ap_11point(scored_flags: &[(f64, bool)], total_gts: usize) -> Result<f64> {
    if let Some((c, _)) = scored_flags.iter().find(|(c, _)| !c.is_finite()) {
        return Err(Error::Protocol(format!("non-finite confidence {c}")));
    }
    let tp_total = scored_flags.iter().filter(|(_, tp)| *tp).count();
    if tp_total > total_gts {
        return Err(Error::Protocol(format!(
            "{tp_total} true positives exceed {total_gts} ground-truth boxes"
        )));
    }
    if total_gts == 0 {
        return Ok(0.0);
    }

    let mut order: Vec<usize> = (0..scored_flags.len()).collect();
    order.sort_by(|&a, &b| scored_flags[b].0.total_cmp(&scored_flags[a].0));

    // (tp count, precision) after each ranked detection
    let mut curve = Vec::with_capacity(order.len());
    let mut tp = 0usize;
    for (rank, &i) in order.iter().enumerate() {
        if scored_flags[i].1 {
            tp += 1;
        }
        curve.push((tp, tp as f64 / (rank + 1) as f64));
    }
    // precision envelope: best precision at this rank or any later one
    let mut envelope = vec![0.0; curve.len()];
    let mut running = 0.0f64;
    for k in (0..curve.len()).rev() {
        running = running.max(curve[k].1);
        envelope[k] = running;
    }

    let mut sum = 0.0;
    let mut k = 0usize;
    for step in 0..RECALL_POINTS {
        // recall >= step/10  <=>  10 * tp >= step * total_gts
        while k < curve.len() && 10 * curve[k].0 < step * total_gts {
            k += 1;
        }
        if k < curve.len() {
            sum += envelope[k];
        }
    }
    Ok(sum / RECALL_POINTS as f64)
}
