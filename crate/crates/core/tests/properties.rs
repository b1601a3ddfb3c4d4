mod common;

use fsd_core::atdh::{
    apply_attention, channel_descriptors, fuse_and_normalize, head_forward, init_head_params, shortcut_merge,
    AttentionBlock, HeadConfig,
};
use fsd_core::boxmetrics::{
    ap_11point, area_diff_norm, burning_intensity, evaluate, format_record, group_by_image, iou, parse_record, BBox,
    BIWeights, Category, LabeledBox,
};
use fsd_core::dataingest::{letterbox_transform, split_manifest, ImageRecord, Manifest, Split};
use fsd_core::FeatureMap;
use proptest::prelude::*;
use std::path::PathBuf;

fn bbox() -> impl Strategy<Value = BBox> {
    (-500.0..500.0f64, -500.0..500.0f64, 0.01..300.0f64, 0.01..300.0f64)
        .prop_map(|(cx, cy, w, h)| BBox::new(cx, cy, w, h).unwrap())
}

fn weights() -> impl Strategy<Value = BIWeights> {
    (0.0..=1.0f64).prop_map(|w1| BIWeights::new(w1, 1.0 - w1).unwrap())
}

fn scaled(b: &BBox, s: f64) -> BBox {
    BBox::new(b.cx() * s, b.cy() * s, b.w() * s, b.h() * s).unwrap()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(2000))]

    #[test]
    fn area_diff_norm_is_symmetric(a in bbox(), b in bbox()) {
        prop_assert_eq!(area_diff_norm(&a, &b), area_diff_norm(&b, &a));
    }

    #[test]
    fn metrics_are_scale_invariant(a in bbox(), b in bbox(), s in 0.01..100.0f64, w in weights()) {
        let (sa, sb) = (scaled(&a, s), scaled(&b, s));
        prop_assert!((iou(&a, &b) - iou(&sa, &sb)).abs() < 1e-9);
        prop_assert!((area_diff_norm(&a, &b) - area_diff_norm(&sa, &sb)).abs() < 1e-9);
        prop_assert!((burning_intensity(&a, &b, w) - burning_intensity(&sa, &sb, w)).abs() < 1e-9);
    }

    #[test]
    fn area_diff_norm_ignores_translation(a in bbox(), b in bbox(), dx in -100.0..100.0f64, dy in -100.0..100.0f64) {
        let t = b.translate(dx, dy).unwrap();
        prop_assert!((area_diff_norm(&a, &b) - area_diff_norm(&a, &t)).abs() < 1e-12);
    }

    #[test]
    fn metrics_stay_in_unit_interval(a in bbox(), b in bbox(), w in weights()) {
        for v in [iou(&a, &b), area_diff_norm(&a, &b), burning_intensity(&a, &b, w)] {
            prop_assert!((0.0..=1.0).contains(&v), "{}", v);
        }
    }

    #[test]
    fn bi_is_one_exactly_for_identical_boxes(
        a in bbox(),
        w1 in 0.01..0.99f64,
        coord in 0usize..4,
        delta in prop_oneof![-5.0..-1e-3f64, 1e-3..5.0f64],
    ) {
        let w = BIWeights::new(w1, 1.0 - w1).unwrap();
        prop_assert!((burning_intensity(&a, &a, w) - 1.0).abs() < 1e-9);
        let mut v = [a.cx(), a.cy(), a.w(), a.h()];
        v[coord] += delta;
        if v[2] > 0.0 && v[3] > 0.0 {
            let b = BBox::new(v[0], v[1], v[2], v[3]).unwrap();
            prop_assert!(burning_intensity(&a, &b, w) < 1.0 - 1e-9);
        }
    }

    #[test]
    fn record_lines_round_trip(b in bbox(), conf in proptest::option::of(0.0..=1.0f64), fire in any::<bool>()) {
        let cat = if fire { Category::Fire } else { Category::Smoke };
        let lb = match conf {
            Some(c) => LabeledBox::detection("img_1", cat, b, c).unwrap(),
            None => LabeledBox::ground_truth("img_1", cat, b),
        };
        let back = parse_record(&format_record(&lb)).unwrap();
        prop_assert_eq!(back.category, cat);
        prop_assert!((back.bbox.cx() - b.cx()).abs() <= 5e-7);
        prop_assert!((back.bbox.w() - b.w()).abs() <= 5e-7);
        prop_assert_eq!(back.confidence.is_some(), conf.is_some());
    }
}

#[test]
fn translation_never_beats_alignment() {
    for (w1, h1, w2, h2) in [(2, 2, 2, 2), (3, 1, 2, 2), (4, 3, 1, 2), (5, 5, 3, 4), (1, 1, 1, 1)] {
        let a = BBox::new(0.0, 0.0, w1 as f64, h1 as f64).unwrap();
        let b = BBox::new(0.0, 0.0, w2 as f64, h2 as f64).unwrap();
        let aligned = iou(&a, &b);
        for dx in -8..=8 {
            for dy in -8..=8 {
                let t = b.translate(dx as f64 * 0.5, dy as f64 * 0.5).unwrap();
                assert!(iou(&a, &t) <= aligned + 1e-12, "shift ({dx}, {dy})");
            }
        }
    }
}

/// Brute-force interpolated AP straight from the definition.
fn ap_oracle(flags: &[(f64, bool)], total: usize) -> f64 {
    if total == 0 {
        return 0.0;
    }
    let mut ranked = flags.to_vec();
    ranked.sort_by(|a, b| b.0.partial_cmp(&a.0).unwrap());
    let mut points = Vec::new();
    let mut tp = 0;
    for (k, (_, is_tp)) in ranked.iter().enumerate() {
        tp += *is_tp as usize;
        points.push((tp as f64 / total as f64, tp as f64 / (k + 1) as f64));
    }
    let mut sum = 0.0;
    for i in 0..=10 {
        let r = i as f64 / 10.0;
        sum += points.iter().filter(|p| p.0 >= r).map(|p| p.1).fold(0.0, f64::max);
    }
    sum / 11.0
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(1000))]

    #[test]
    fn ap_matches_oracle(
        (total, flags) in (0usize..=6).prop_flat_map(|g| {
            (Just(g), proptest::collection::vec(any::<bool>(), 0..=12))
        }).prop_map(|(g, tps)| {
            let mut n_tp = 0;
            let flags: Vec<(f64, bool)> = tps.iter().enumerate().map(|(i, &t)| {
                let tp = t && n_tp < g;
                n_tp += tp as usize;
                (((i * 7919) % 97) as f64 / 97.0 + i as f64 * 1e-6, tp)
            }).collect();
            (g, flags)
        })
    ) {
        let got = ap_11point(&flags, total).unwrap();
        prop_assert!((got - ap_oracle(&flags, total)).abs() < 1e-12);
    }
}

fn dataset(seed: u64) -> (Vec<LabeledBox>, Vec<LabeledBox>) {
    let mut r = common::rng(seed);
    use rand::Rng;
    let mut gts = Vec::new();
    let mut dets = Vec::new();
    let mut conf_pool: Vec<f64> = (0..200).map(|i| (i as f64 + 0.5) / 200.0).collect();
    for img in 0..4 {
        let id = format!("im{img}");
        for _ in 0..r.random_range(0..4) {
            let cat = if r.random_bool(0.5) { Category::Fire } else { Category::Smoke };
            let g = BBox::new(r.random_range(20.0..80.0), r.random_range(20.0..80.0), r.random_range(5.0..30.0), r.random_range(5.0..30.0)).unwrap();
            gts.push(LabeledBox::ground_truth(id.clone(), cat, g));
            for _ in 0..r.random_range(0..3) {
                let d = g.translate(r.random_range(-4.0..4.0), r.random_range(-4.0..4.0)).unwrap();
                let conf = conf_pool.swap_remove(r.random_range(0..conf_pool.len()));
                dets.push(LabeledBox::detection(id.clone(), cat, d, conf).unwrap());
            }
        }
    }
    (gts, dets)
}

#[test]
fn evaluate_ignores_input_order_and_low_fps() {
    use rand::seq::SliceRandom;
    for seed in 0..100 {
        let (gts, dets) = dataset(seed);
        if gts.is_empty() {
            continue;
        }
        let g = group_by_image(gts.iter().cloned());
        let base = evaluate(&group_by_image(dets.iter().cloned()), &g, 0.5, BIWeights::default()).unwrap();
        let mut shuffled = dets.clone();
        shuffled.shuffle(&mut common::rng(seed + 7));
        let again = evaluate(&group_by_image(shuffled), &g, 0.5, BIWeights::default()).unwrap();
        assert_eq!(base.ap_per_class, again.ap_per_class);
        assert_eq!(base.map, again.map);

        let mut with_fp = dets.clone();
        let far = BBox::new(500.0, 500.0, 10.0, 10.0).unwrap();
        with_fp.push(LabeledBox::detection(gts[0].image_id.clone(), gts[0].category, far, 0.0001).unwrap());
        let lowered = evaluate(&group_by_image(with_fp), &g, 0.5, BIWeights::default()).unwrap();
        for (c, ap) in &lowered.ap_per_class {
            assert!(*ap <= base.ap_per_class[c] + 1e-15, "seed {seed}: AP rose for {c}");
        }
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(300))]

    #[test]
    fn attention_scores_are_a_distribution(
        values in proptest::collection::vec(-1e4..1e4f64, 1..16),
        extra in proptest::collection::vec(-1e4..1e4f64, 16),
    ) {
        let mp: Vec<f64> = values.iter().zip(&extra).map(|(g, e)| g.max(*e)).collect();
        let s = fuse_and_normalize(&values, &mp).unwrap();
        prop_assert!((s.as_slice().iter().sum::<f64>() - 1.0).abs() < 1e-6);
        prop_assert!(s.as_slice().iter().all(|v| *v >= 0.0));
    }

    #[test]
    fn attention_block_preserves_shape_and_permutes_with_channels(
        c in 1usize..8, h in 1usize..6, w in 1usize..6, seed in 0u64..1000,
    ) {
        let mut r = common::rng(seed);
        let x = common::random_map(&mut r, c, h, w, 3.0);
        let (gap, mp) = channel_descriptors(&x);
        prop_assert!(gap.iter().zip(&mp).all(|(g, m)| m >= g));
        let s = fuse_and_normalize(&gap, &mp).unwrap();
        let block = AttentionBlock { enabled: true, rescale_by_c: true };
        prop_assert_eq!(block.forward(&x).unwrap().0.shape(), x.shape());

        let perm: Vec<usize> = (0..c).rev().collect();
        let xp = FeatureMap::from_fn(c, h, w, x.stride, |ch, y, xx| x.at(perm[ch], y, xx));
        let (gp, mpp) = channel_descriptors(&xp);
        let sp = fuse_and_normalize(&gp, &mpp).unwrap();
        for ch in 0..c {
            prop_assert!((sp.as_slice()[ch] - s.as_slice()[perm[ch]]).abs() < 1e-15);
        }
        let cfg = HeadConfig::default();
        let attended = apply_attention(&x, &s, &cfg).unwrap();
        let merged = shortcut_merge(&x, &attended).unwrap();
        for i in 0..x.data().len() {
            let want = x.data()[i] + attended.data()[i];
            prop_assert!((merged.data()[i] - want).abs() <= 1e-12 * (1.0 + want.abs()));
        }
    }
}

/// Makes every tower output channel identical, so attention scores are uniform.
fn uniform_tower(params: &mut fsd_core::ParamSet, cfg: &HeadConfig) {
    for l in 0..cfg.tower_depth {
        let name = format!("head.tower.{l}.conv.weight");
        let w = params.get_mut(&name).unwrap();
        let per_out = w.data.len() / cfg.channels;
        let first: Vec<f64> = w.data[..per_out].to_vec();
        for o in 1..cfg.channels {
            w.data[o * per_out..(o + 1) * per_out].copy_from_slice(&first);
        }
    }
}

#[test]
fn bypass_equivalence_with_uniform_channels() {
    for seed in 0..20 {
        let on = HeadConfig {
            channels: 8,
            ..HeadConfig::default()
        };
        let off = HeadConfig {
            attention_enabled: false,
            ..on.clone()
        };
        let mut params = init_head_params(&on, 1, seed).unwrap();
        uniform_tower(&mut params, &on);
        let mut r = common::rng(seed);
        let x = common::random_map(&mut r, 8, 5, 7, 1.0);
        let a = head_forward(&x, &on, &params, 0).unwrap();
        let b = head_forward(&x, &off, &params, 0).unwrap();
        for (p, q) in [(&a.cls_logits, &b.cls_logits), (&a.reg, &b.reg), (&a.centerness, &b.centerness)] {
            for (u, v) in p.data().iter().zip(q.data()) {
                assert!((u - v).abs() <= 1e-9 * (1.0 + v.abs()), "seed {seed}: {u} vs {v}");
            }
        }
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(500))]

    #[test]
    fn letterbox_round_trips_boxes(
        sh in 8usize..1200, sw in 8usize..1200, th in 1usize..20, tw in 1usize..20,
        fx in 0.05..0.95f64, fy in 0.05..0.95f64, fw in 0.01..0.5f64, fh in 0.01..0.5f64,
    ) {
        let t = letterbox_transform((sh, sw), (th * 32, tw * 32));
        let b = BBox::new(fx * sw as f64, fy * sh as f64, fw * sw as f64, fh * sh as f64).unwrap();
        let back = t.inverse(&t.forward(&b).unwrap()).unwrap();
        for (u, v) in [(back.cx(), b.cx()), (back.cy(), b.cy()), (back.w(), b.w()), (back.h(), b.h())] {
            prop_assert!((u - v).abs() < 1e-9);
        }
    }

    #[test]
    fn splits_partition_the_manifest(n in 1usize..300, frac in 0.01..0.99f64, seed in any::<u64>()) {
        let records = (0..n).map(|i| ImageRecord {
            image_id: format!("r{i}"),
            path: PathBuf::from(format!("r{i}.png")),
            width: 10,
            height: 10,
            annotations: vec![],
        }).collect();
        let m = Manifest::new("p", Split::All, records);
        let (a, b) = split_manifest(&m, frac, seed).unwrap();
        prop_assert_eq!(a.records.len() + b.records.len(), n);
        let mut ids: Vec<&String> = a.records.iter().chain(&b.records).map(|r| &r.image_id).collect();
        ids.sort();
        ids.dedup();
        prop_assert_eq!(ids.len(), n);
        let (a2, _) = split_manifest(&m, frac, seed).unwrap();
        prop_assert_eq!(a2, a);
    }
}
