mod common;

use fsd_core::atdh::HeadOutput;
use fsd_core::boxmetrics::{iou, BBox, Category, LabeledBox};
use fsd_core::detector::{assign_targets, decode, nms, train, Detector, DetectorConfig, TrainConfig, TrainSample};
use fsd_core::FeatureMap;
use rand::Rng;

/// A set is the greedy result iff each box is kept exactly when no kept
/// same-class box ranked above it overlaps it past the threshold.
fn is_greedy_fixed_point(dets: &[LabeledBox], rank: &[usize], keep: &[bool], thr: f64) -> bool {
    (0..dets.len()).all(|i| {
        let blocked = (0..dets.len()).any(|j| {
            keep[j] && rank[j] < rank[i] && dets[j].category == dets[i].category && iou(&dets[j].bbox, &dets[i].bbox) > thr
        });
        keep[i] == !blocked
    })
}

#[test]
fn nms_matches_exhaustive_oracle() {
    let mut r = common::rng(11);
    for case in 0..1000 {
        let n = r.random_range(0..=8);
        let thr = [0.3, 0.5, 0.6, 0.8][case % 4];
        let dets: Vec<LabeledBox> = (0..n)
            .map(|_| {
                let cat = if r.random_bool(0.7) { Category::Fire } else { Category::Smoke };
                let b = BBox::new(r.random_range(0.0..30.0), r.random_range(0.0..30.0), r.random_range(4.0..20.0), r.random_range(4.0..20.0)).unwrap();
                LabeledBox::detection("x", cat, b, (r.random_range(0..20) as f64) / 20.0).unwrap()
            })
            .collect();
        // Stable descending rank: equal confidences keep input order.
        let mut order: Vec<usize> = (0..n).collect();
        order.sort_by(|&a, &b| dets[b].confidence.partial_cmp(&dets[a].confidence).unwrap());
        let mut rank = vec![0; n];
        for (k, &i) in order.iter().enumerate() {
            rank[i] = k;
        }
        let mut fixed = Vec::new();
        for mask in 0u32..(1 << n) {
            let keep: Vec<bool> = (0..n).map(|i| mask & (1 << i) != 0).collect();
            if is_greedy_fixed_point(&dets, &rank, &keep, thr) {
                fixed.push(keep);
            }
        }
        assert_eq!(fixed.len(), 1, "case {case}");
        let expected: Vec<LabeledBox> = order.iter().filter(|&&i| fixed[0][i]).map(|&i| dets[i].clone()).collect();
        assert_eq!(nms(&dets, thr).unwrap(), expected, "case {case}");
    }
}

/// Head outputs that reproduce the assigned targets exactly.
fn oracle_outputs(gts: &[LabeledBox], cfg: &DetectorConfig) -> Vec<HeadOutput> {
    let t = assign_targets(gts, cfg);
    t.levels
        .iter()
        .map(|lt| {
            let (h, w, s) = (lt.height, lt.width, lt.stride);
            HeadOutput {
                cls_logits: FeatureMap::from_fn(2, h, w, s, |c, y, x| match lt.cls[y * w + x] {
                    Some(cat) if cat.index() == c => 12.0,
                    _ => -12.0,
                }),
                reg: FeatureMap::from_fn(4, h, w, s, |j, y, x| lt.reg[y * w + x][j]),
                centerness: FeatureMap::from_fn(1, h, w, s, |_, _, _| 12.0),
            }
        })
        .collect()
}

#[test]
fn assignment_decodes_back_to_ground_truth() {
    let cfg = DetectorConfig::default();
    let mut r = common::rng(5);
    let mut scenes = 0;
    while scenes < 200 {
        let n = r.random_range(1..=3);
        let mut gts: Vec<LabeledBox> = Vec::new();
        for _ in 0..n {
            let (w, h) = (r.random_range(16.0..200.0), r.random_range(16.0..200.0));
            let b = BBox::new(r.random_range(w / 2.0..256.0 - w / 2.0), r.random_range(h / 2.0..256.0 - h / 2.0), w, h).unwrap();
            if gts.iter().all(|g| iou(&g.bbox, &b) == 0.0) {
                let cat = if r.random_bool(0.5) { Category::Fire } else { Category::Smoke };
                gts.push(LabeledBox::ground_truth("s", cat, b));
            }
        }
        scenes += 1;
        let kept = nms(&decode(&oracle_outputs(&gts, &cfg), &cfg, "s"), cfg.nms_iou).unwrap();
        assert_eq!(kept.len(), gts.len(), "scene {scenes}: {gts:?}");
        for g in &gts {
            let hit = kept.iter().any(|d| {
                d.category == g.category
                    && (d.bbox.cx() - g.bbox.cx()).abs() <= 0.5
                    && (d.bbox.cy() - g.bbox.cy()).abs() <= 0.5
                    && (d.bbox.w() - g.bbox.w()).abs() <= 0.5
                    && (d.bbox.h() - g.bbox.h()).abs() <= 0.5
            });
            assert!(hit, "scene {scenes}: {g:?} not recovered from {kept:?}");
        }
    }
}

#[test]
fn backbone_levels_follow_strides() {
    let det = Detector::new(&DetectorConfig::default()).unwrap();
    let params = det.init_params(0).unwrap();
    let shapes = |h, w| {
        det.backbone_forward(&params, &FeatureMap::zeros(3, h, w, 1))
            .map(|m| m.iter().map(|f| (f.height(), f.width(), f.stride)).collect::<Vec<_>>())
    };
    assert_eq!(shapes(256, 256).unwrap(), vec![(32, 32, 8), (16, 16, 16), (8, 8, 32)]);
    assert_eq!(shapes(128, 192).unwrap(), vec![(16, 24, 8), (8, 12, 16), (4, 6, 32)]);
    assert!(shapes(250, 256).is_err());
    let bad = DetectorConfig {
        input_size: (250, 250),
        ..DetectorConfig::default()
    };
    assert!(Detector::new(&bad).is_err());
}

fn tiny() -> (Vec<TrainSample>, DetectorConfig, TrainConfig) {
    let mut cfg = DetectorConfig::default();
    cfg.input_size = (64, 64);
    cfg.backbone_widths = vec![4, 4, 8, 8];
    cfg.head.channels = 4;
    cfg.head.tower_depth = 1;
    cfg.level_ranges = vec![(0.0, 16.0), (16.0, 32.0), (32.0, f64::INFINITY)];
    let mut r = common::rng(3);
    let samples = (0..3)
        .map(|i| TrainSample {
            image_id: format!("t{i}"),
            image: common::random_map(&mut r, 3, 64, 64, 1.0),
            gts: vec![LabeledBox::ground_truth(format!("t{i}"), Category::Fire, BBox::new(30.0, 30.0, 20.0 + i as f64, 16.0).unwrap())],
        })
        .collect();
    let tcfg = TrainConfig {
        steps: 4,
        warmup_steps: 1,
        ..TrainConfig::default()
    };
    (samples, cfg, tcfg)
}

#[test]
fn training_is_reproducible_per_seed() {
    let (samples, cfg, tcfg) = tiny();
    let a = train(&samples, &cfg, &tcfg, 9).unwrap();
    let b = train(&samples, &cfg, &tcfg, 9).unwrap();
    assert_eq!(a.trace, b.trace);
    assert_eq!(a.checkpoint.to_bytes(), b.checkpoint.to_bytes());
    let c = train(&samples, &cfg, &tcfg, 10).unwrap();
    assert_ne!(a.trace, c.trace);
}

#[test]
fn training_rejects_bad_inputs() {
    let (samples, cfg, tcfg) = tiny();
    assert!(train(&[], &cfg, &tcfg, 0).is_err());
    let mut wrong = samples.clone();
    wrong[0].image = FeatureMap::zeros(3, 32, 64, 1);
    assert!(train(&wrong, &cfg, &tcfg, 0).is_err());
}
