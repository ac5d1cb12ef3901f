use std::f64::consts::PI;

use bos_core::filters::{self, Polarity};
use bos_core::relax;
use bos_core::stimulus::{self, StimulusSpec};
use bos_core::{run_model, CompatibilityFn, Grid, ModelParams};
use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};

fn convolution(c: &mut Criterion) {
    let map = Grid::from_fn(400, 400, |x, y| ((x * 7 + y * 13) % 17) as f64 / 16.0);
    let mut g = c.benchmark_group("convolve_400");
    for rf in [13usize, 33, 81] {
        let k = filters::gabor_kernel(rf, 0.0, PI / 2.0).unwrap();
        g.bench_with_input(BenchmarkId::new("gabor", rf), &k, |b, k| b.iter(|| filters::convolve(&map, k).unwrap()));
    }
    let dog = filters::dog_edge_kernel(33, PI / 2.0, Polarity::Pos).unwrap();
    g.bench_function("dog_33", |b| b.iter(|| filters::convolve(&map, &dog).unwrap()));
    let dense = filters::gabor_kernel(33, PI / 4.0, PI / 2.0).unwrap();
    g.bench_function("dense_33", |b| b.iter(|| filters::convolve(&map, &dense).unwrap()));
    g.finish();
}

fn relaxation(c: &mut Criterion) {
    let canvas = stimulus::make_square(&StimulusSpec::default()).unwrap();
    let out = run_model(&canvas, &ModelParams::default(), false).unwrap();
    let space = relax::init_confidences(&out.pre, 1e-9);
    let compat = CompatibilityFn::default();
    c.bench_function("rl_step_400", |b| b.iter(|| relax::rl_step(&space, &compat)));
}

fn pipeline(c: &mut Criterion) {
    let canvas = stimulus::make_square(&StimulusSpec::default()).unwrap();
    let p = ModelParams::default();
    let mut g = c.benchmark_group("pipeline");
    g.sample_size(10);
    g.bench_function("square_400", |b| b.iter(|| run_model(&canvas, &p, false).unwrap()));
    g.finish();
}

criterion_group!(benches, convolution, relaxation, pipeline);
criterion_main!(benches);
