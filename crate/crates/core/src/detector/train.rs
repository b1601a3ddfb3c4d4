use rand::seq::SliceRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};

use super::checkpoint::Checkpoint;
use super::config::{DetectorConfig, TrainConfig};
use super::loss::loss_and_grad;
use super::model::Detector;
use super::targets::assign_targets;
use crate::boxmetrics::{BBox, LabeledBox};
use crate::error::{Error, Result};
use crate::nn::{FeatureMap, Grads, ParamSet};
use crate::util::rng_for;

/// A letterboxed image with its ground truth in input coordinates.
#[derive(Debug, Clone, PartialEq)]
pub struct TrainSample {
    pub image_id: String,
    pub image: FeatureMap,
    pub gts: Vec<LabeledBox>,
}

impl TrainSample {
    /// Mirror image and boxes about the vertical center line.
    pub fn flipped(&self) -> Result<Self> {
        let (c, h, w) = self.image.shape();
        let image = FeatureMap::from_fn(c, h, w, self.image.stride, |ch, y, x| self.image.at(ch, y, w - 1 - x));
        let gts = self
            .gts
            .iter()
            .map(|g| {
                let b = BBox::new(w as f64 - g.bbox.cx(), g.bbox.cy(), g.bbox.w(), g.bbox.h())?;
                Ok(LabeledBox { bbox: b, ..g.clone() })
            })
            .collect::<Result<_>>()?;
        Ok(Self {
            image_id: self.image_id.clone(),
            image,
            gts,
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LossRecord {
    pub step: usize,
    pub cls: f64,
    pub reg: f64,
    pub ctr: f64,
    pub total: f64,
}

#[derive(Debug, Clone)]
pub struct TrainOutcome {
    pub checkpoint: Checkpoint,
    pub trace: Vec<LossRecord>,
}

/// Loss trace as CSV with a `step,cls,reg,ctr,total` header.
pub fn trace_csv(trace: &[LossRecord]) -> String {
    let mut s = String::from("step,cls,reg,ctr,total\n");
    for r in trace {
        s.push_str(&format!("{},{:.9},{:.9},{:.9},{:.9}\n", r.step, r.cls, r.reg, r.ctr, r.total));
    }
    s
}

/// Mean total loss over the first and last `window` steps.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LossTrend {
    pub initial: f64,
    pub last: f64,
}

impl LossTrend {
    pub fn ratio(&self) -> f64 {
        self.last / self.initial
    }

    pub fn decreasing(&self) -> bool {
        self.last < self.initial
    }
}

pub fn loss_trend(trace: &[LossRecord], window: usize) -> Option<LossTrend> {
    if trace.is_empty() || window == 0 {
        return None;
    }
    let w = window.min(trace.len());
    let mean = |s: &[LossRecord]| s.iter().map(|r| r.total).sum::<f64>() / s.len() as f64;
    Some(LossTrend {
        initial: mean(&trace[..w]),
        last: mean(&trace[trace.len() - w..]),
    })
}

fn learning_rate(cfg: &TrainConfig, step: usize) -> f64 {
    if step < cfg.warmup_steps {
        let f = (step + 1) as f64 / cfg.warmup_steps as f64;
        return cfg.learning_rate * (0.1 + 0.9 * f);
    }
    let span = (cfg.steps - cfg.warmup_steps).max(1) as f64;
    let progress = (step - cfg.warmup_steps) as f64 / span;
    cfg.learning_rate * (0.02 + 0.98 * 0.5 * (1.0 + (std::f64::consts::PI * progress).cos()))
}

/// Loss and parameter gradients for one sample.
pub fn sample_gradient(
    detector: &Detector,
    params: &ParamSet,
    sample: &TrainSample,
) -> Result<(super::loss::LossBundle, Grads)> {
    let (outs, cache) = detector.forward(params, &sample.image)?;
    let targets = assign_targets(&sample.gts, &detector.config);
    let (loss, d_outs) = loss_and_grad(&outs, &targets)?;
    let mut grads = Grads::zeros_like(params);
    detector.backward(params, &cache, &outs, &d_outs, &mut grads)?;
    Ok((loss, grads))
}

/// Stochastic gradient descent with momentum.
///
/// The seed fixes initialization, the per-epoch sample order and the flip
/// draws, so identical inputs give bitwise-identical traces and parameters.
pub fn train(samples: &[TrainSample], config: &DetectorConfig, tcfg: &TrainConfig, seed: u64) -> Result<TrainOutcome> {
    train_with_progress(samples, config, tcfg, seed, |_| {})
}

pub fn train_with_progress(
    samples: &[TrainSample],
    config: &DetectorConfig,
    tcfg: &TrainConfig,
    seed: u64,
    mut on_step: impl FnMut(&LossRecord),
) -> Result<TrainOutcome> {
    if samples.is_empty() {
        return Err(Error::Config("training set is empty".into()));
    }
    tcfg.validate()?;
    let detector = Detector::new(config)?;
    let (h, w) = config.input_size;
    if let Some(s) = samples.iter().find(|s| s.image.shape() != (3, h, w)) {
        return Err(Error::Config(format!(
            "sample {} has shape {:?}, expected (3, {h}, {w})",
            s.image_id,
            s.image.shape()
        )));
    }
    let mut params = detector.init_params(seed)?;
    let decays: Vec<bool> = params.iter().map(|a| a.name.ends_with(".weight")).collect();
    let mut velocity = Grads::zeros_like(&params);
    let mut order_rng = rng_for(seed, "sample-order");
    let mut flip_rng = rng_for(seed, "flip");
    let mut order: Vec<usize> = Vec::new();
    let mut trace = Vec::with_capacity(tcfg.steps);

    for step in 0..tcfg.steps {
        let mut batch_grads = Grads::zeros_like(&params);
        let mut rec = LossRecord {
            step,
            cls: 0.0,
            reg: 0.0,
            ctr: 0.0,
            total: 0.0,
        };
        for _ in 0..tcfg.batch_size {
            if order.is_empty() {
                order = (0..samples.len()).collect();
                order.shuffle(&mut order_rng);
                order.reverse();
            }
            let idx = order.pop().unwrap();
            let flip = tcfg.flip && flip_rng.random_bool(0.5);
            let owned;
            let sample = if flip {
                owned = samples[idx].flipped()?;
                &owned
            } else {
                &samples[idx]
            };
            let (loss, g) = sample_gradient(&detector, &params, sample).map_err(|e| match e {
                Error::Numeric(detail) => Error::Diverged { step, detail },
                other => other,
            })?;
            rec.cls += loss.cls;
            rec.reg += loss.reg;
            rec.ctr += loss.centerness;
            rec.total += loss.total;
            batch_grads.add(&g);
        }
        let nb = tcfg.batch_size as f64;
        rec.cls /= nb;
        rec.reg /= nb;
        rec.ctr /= nb;
        rec.total /= nb;
        batch_grads.scale(1.0 / nb);
        if !rec.total.is_finite() || !batch_grads.is_finite() {
            return Err(Error::Diverged {
                step,
                detail: format!("loss {:?}", rec),
            });
        }
        if tcfg.grad_clip > 0.0 {
            let norm = batch_grads.l2_norm();
            if norm > tcfg.grad_clip {
                batch_grads.scale(tcfg.grad_clip / norm);
            }
        }
        let lr = learning_rate(tcfg, step);
        for id in 0..params.len() {
            let g = batch_grads.slot(id);
            let p = &mut params.by_id_mut(id).data;
            let v = velocity.slot_mut(id);
            for k in 0..p.len() {
                let mut gk = g[k];
                if decays[id] {
                    gk += tcfg.weight_decay * p[k];
                }
                v[k] = tcfg.momentum * v[k] + gk;
                p[k] -= lr * v[k];
            }
        }
        on_step(&rec);
        trace.push(rec);
    }

    Ok(TrainOutcome {
        checkpoint: Checkpoint {
            config: config.clone(),
            params,
        },
        trace,
    })
}
