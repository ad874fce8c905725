//! Benchmarks for the hot paths: the objective-curve grid evaluation
//! (parallel vs sequential), full single-window estimation + detection, and
//! trace generation.
//!
//! Run with `cargo bench -p breathtaking`. Build with
//! `--no-default-features` to measure the sequential public API as well.

use criterion::{criterion_group, criterion_main, Criterion};
use std::hint::black_box;

use breathtaking::detect::network_detect;
use breathtaking::estimate::{estimate_window, objective_curve, objective_curve_serial};
use breathtaking::model::{DetectorConfig, EstimatorConfig, NetworkWindow};
use breathtaking::preprocess::{segment, SegmentConfig};
use breathtaking::simulate::{generate, preset};

/// A realistic full-mesh window: 380 links, 125 samples (T = 30 s).
fn full_mesh_window() -> NetworkWindow {
    let mut scenario = preset("patch_quiet").unwrap();
    scenario.duration_s = 100.0;
    let (traces, _) = generate(&scenario).unwrap();
    let cfg = SegmentConfig::new(30.0, 5.0);
    let windows = segment(&traces, &cfg).unwrap();
    windows.into_iter().next().expect("at least one window")
}

fn bench_objective_curve(c: &mut Criterion) {
    let window = full_mesh_window();
    let cfg = EstimatorConfig::default();
    let mut group = c.benchmark_group("objective_curve_380x125");
    group.sample_size(20);
    group.bench_function("default", |b| {
        b.iter(|| objective_curve(black_box(&window), black_box(&cfg)).unwrap())
    });
    group.bench_function("sequential", |b| {
        b.iter(|| objective_curve_serial(black_box(&window), black_box(&cfg)).unwrap())
    });
    group.finish();
}

fn bench_estimate_detect(c: &mut Criterion) {
    let window = full_mesh_window();
    let est_cfg = EstimatorConfig::default();
    let det_cfg = DetectorConfig::default();
    let mut group = c.benchmark_group("window_pipeline");
    group.sample_size(20);
    group.bench_function("estimate_plus_detect", |b| {
        b.iter(|| {
            let est = estimate_window(black_box(&window), black_box(&est_cfg)).unwrap();
            network_detect(&est, window.num_samples(), &det_cfg)
        })
    });
    group.finish();
}

fn bench_generate(c: &mut Criterion) {
    let mut scenario = preset("patch_quiet").unwrap();
    scenario.duration_s = 60.0;
    let mut group = c.benchmark_group("simulate");
    group.sample_size(10);
    group.bench_function("generate_20_nodes_60s", |b| {
        b.iter(|| generate(black_box(&scenario)).unwrap())
    });
    group.finish();
}

criterion_group!(benches, bench_objective_curve, bench_estimate_detect, bench_generate);
criterion_main!(benches);
