use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use sdcs_core::classical::stain::stain_deconvolve;
use sdcs_core::detector::aggregate_windows;
use sdcs_core::net::{SdcsConfig, SdcsModel};
use sdcs_core::par::Execution;
use sdcs_core::pipeline::{generate_datasets, nucleus_features, BenchmarkConfig};
use sdcs_core::synth::{generate_tile, SceneConfig};
use std::hint::black_box;

const MODES: [(&str, Execution); 2] = [("sequential", Execution::Sequential), ("parallel", Execution::Parallel)];

fn window_aggregation(c: &mut Criterion) {
    let (tile, _) = generate_tile(&SceneConfig::default()).unwrap();
    let model = SdcsModel::new(SdcsConfig::compact(), 1).unwrap();
    let mut g = c.benchmark_group("window_aggregation");
    g.sample_size(10);
    for (name, exec) in MODES {
        g.bench_with_input(BenchmarkId::from_parameter(name), &exec, |b, &exec| {
            b.iter(|| black_box(aggregate_windows(&tile, &model, 48, exec).unwrap()))
        });
    }
    g.finish();
}

fn tile_batch(c: &mut Criterion) {
    let config = BenchmarkConfig {
        train_tiles: 8,
        validation_tiles: 0,
        test_tiles: 8,
        ..BenchmarkConfig::default()
    };
    let mut g = c.benchmark_group("tile_generation");
    g.sample_size(10);
    for (name, exec) in MODES {
        g.bench_with_input(BenchmarkId::from_parameter(name), &exec, |b, &exec| {
            b.iter(|| black_box(generate_datasets(&config, exec).unwrap()))
        });
    }
    g.finish();
}

fn nucleus_descriptors(c: &mut Criterion) {
    let config = BenchmarkConfig::default();
    let (tile, _) = generate_tile(&config.scene).unwrap();
    let channels = stain_deconvolve(&tile, &config.scene.stains);
    let mut g = c.benchmark_group("nucleus_features");
    g.sample_size(10);
    for (name, exec) in MODES {
        g.bench_with_input(BenchmarkId::from_parameter(name), &exec, |b, &exec| {
            b.iter(|| black_box(nucleus_features(&channels, &config.classical.segment, exec).unwrap()))
        });
    }
    g.finish();
}

criterion_group!(benches, window_aggregation, tile_batch, nucleus_descriptors);
criterion_main!(benches);
