use std::hint::black_box;

use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};

use psv_core::eval::{shift_grid, Fidelity, Pipeline, PipelineConfig};
use psv_core::par::Execution;
use psv_core::psog::PhotosensorLayout;
use psv_core::scan::{run_scan, GridRange, ScanMode, ScanSpec};
use psv_core::scene::SceneConfig;
use psv_core::vog::{default_sweeps, estimate_gains, DetectorConfig};

const STRATEGIES: [(&str, Execution); 2] = [("sequential", Execution::Sequential), ("parallel", Execution::Parallel)];

fn dense_scan(c: &mut Criterion) {
    let spec = ScanSpec { eye: GridRange::new(-10.0, 10.0, 2.5), shift: GridRange::new(-2.0, 2.0, 1.0), mode: ScanMode::Separable };
    let layout = PhotosensorLayout::default();
    let cfg = SceneConfig::default();
    let mut group = c.benchmark_group("dense_scan");
    group.sample_size(10);
    for (name, exec) in STRATEGIES {
        group.bench_function(BenchmarkId::from_parameter(name), |b| {
            b.iter(|| run_scan(black_box(&spec), &layout, &cfg, exec).unwrap())
        });
    }
    group.finish();
}

fn gain_sweep(c: &mut Criterion) {
    let cfg = SceneConfig::vog_default();
    let det = DetectorConfig::default();
    let (eye, pose) = default_sweeps();
    let mut group = c.benchmark_group("gain_sweep");
    group.sample_size(10);
    for (name, exec) in STRATEGIES {
        group.bench_function(BenchmarkId::from_parameter(name), |b| {
            b.iter(|| estimate_gains(black_box(&cfg), &det, &eye, &pose, exec).unwrap())
        });
    }
    group.finish();
}

fn shift_grid_sweep(c: &mut Criterion) {
    let cfg = PipelineConfig { fidelity: Fidelity::Exact, ..Default::default() };
    let pipeline = Pipeline::prepare(cfg, Execution::Parallel).unwrap();
    let shifts = [-1.0, -0.5, 0.5, 1.0];
    let mut group = c.benchmark_group("shift_grid");
    group.sample_size(10);
    for (name, exec) in STRATEGIES {
        group.bench_function(BenchmarkId::from_parameter(name), |b| {
            b.iter(|| shift_grid(&pipeline, black_box(&shifts), 4.0, exec).unwrap())
        });
    }
    group.finish();
}

criterion_group!(benches, dense_scan, gain_sweep, shift_grid_sweep);
criterion_main!(benches);
