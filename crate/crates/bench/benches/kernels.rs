use criterion::{criterion_group, criterion_main, Criterion};
use fsd_bench::{boxes, detections, feature_map, lcg};
use fsd_core::atdh::{head_forward, init_head_params, HeadConfig};
use fsd_core::boxmetrics::{ap_11point, iou};
use fsd_core::detector::nms;
use std::hint::black_box;

fn bench_iou(c: &mut Criterion) {
    let a = boxes(1000, 1);
    let b = boxes(1000, 2);
    c.bench_function("iou_1000_pairs", |bench| {
        bench.iter(|| a.iter().zip(&b).map(|(x, y)| iou(black_box(x), black_box(y))).sum::<f64>())
    });
}

fn bench_ap(c: &mut Criterion) {
    let conf = lcg(500, 3);
    let flags: Vec<(f64, bool)> = conf.iter().enumerate().map(|(i, &v)| (v, i % 3 != 0)).collect();
    c.bench_function("ap_11point_500", |bench| bench.iter(|| ap_11point(black_box(&flags), 400).unwrap()));
}

fn bench_nms(c: &mut Criterion) {
    let dets = detections(300, 4);
    c.bench_function("nms_300", |bench| bench.iter(|| nms(black_box(&dets), 0.6).unwrap()));
}

fn bench_head(c: &mut Criterion) {
    let cfg = HeadConfig {
        channels: 16,
        ..HeadConfig::default()
    };
    let params = init_head_params(&cfg, 1, 0).unwrap();
    let x = feature_map(16, 16, 16, 5);
    c.bench_function("head_forward_16x16x16", |bench| {
        bench.iter(|| head_forward(black_box(&x), &cfg, &params, 0).unwrap())
    });
}

criterion_group!(benches, bench_iou, bench_ap, bench_nms, bench_head);
criterion_main!(benches);
