use std::hint::black_box;

use criterion::{criterion_group, criterion_main, BatchSize, Criterion};
use granulab_core::pipeline::{generate_scene, Preset};
use granulab_core::sampler::{sample_scene_spec, sample_trunc_normal, scene_rng};
use granulab_core::{compute_psd, estimate_psd, render, settle, QuantileConvention, RunConfig, TruncNormalParams};

fn psd(c: &mut Criterion) {
    let params = TruncNormalParams::new(0.1, 20.0, 10.5, 7.2).unwrap();
    let sizes = sample_trunc_normal(&params, 2000, &mut scene_rng(1)).unwrap();
    let mut g = c.benchmark_group("psd_2000");
    g.bench_function("number", |b| b.iter(|| compute_psd(black_box(&sizes), QuantileConvention::NumberWeighted)));
    g.bench_function("mass", |b| b.iter(|| compute_psd(black_box(&sizes), QuantileConvention::MassWeighted)));
    g.finish();
}

fn sampler(c: &mut Criterion) {
    let params = TruncNormalParams::new(0.1, 20.0, 10.5, 7.2).unwrap();
    c.bench_function("trunc_normal_10k", |b| {
        b.iter_batched(|| scene_rng(7), |mut rng| sample_trunc_normal(&params, 10_000, &mut rng), BatchSize::SmallInput)
    });
}

fn settle_scene(c: &mut Criterion) {
    let cfg = RunConfig::preset(Preset::Desk);
    let spec = sample_scene_spec(&cfg.generation, 0, cfg.master_seed).unwrap();
    let mut g = c.benchmark_group("settle");
    g.sample_size(10);
    g.bench_function(format!("desk_{}_spheres", spec.count), |b| {
        b.iter(|| settle(black_box(&spec), cfg.generation.table_size, &cfg.simulation))
    });
    g.finish();
}

fn render_and_estimate(c: &mut Criterion) {
    let cfg = RunConfig::preset(Preset::Desk);
    let spec = sample_scene_spec(&cfg.generation, 0, cfg.master_seed).unwrap();
    let result = settle(&spec, cfg.generation.table_size, &cfg.simulation).unwrap();
    let scene = generate_scene(&cfg, 0).unwrap();
    let cal = cfg.calibration().unwrap();
    let mut g = c.benchmark_group("image_256");
    g.sample_size(20);
    g.bench_function("render", |b| b.iter(|| render(black_box(&result), &scene.metadata, &cfg.render, 1)));
    g.bench_function("estimate_psd", |b| b.iter(|| estimate_psd(black_box(&scene.image), &cal, cfg.convention)));
    g.finish();
}

criterion_group!(benches, psd, sampler, settle_scene, render_and_estimate);
criterion_main!(benches);
