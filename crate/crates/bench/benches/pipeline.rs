use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};

use cubetop_bench::poisson_frame;
use cubetop_core::cubical::InfiniteMode;
use cubetop_core::detect::detect;
use cubetop_core::imagio::{smooth, RegionSpec};
use cubetop_core::rng::SplitMix64;
use cubetop_core::summaries::LifetimeVector;

fn bench_smoothing(c: &mut Criterion) {
    let frame = poisson_frame(256, 256, 40.0, 7);
    let mut group = c.benchmark_group("smooth_256");
    for &sigma in &[2.0, 4.0, 6.0] {
        group.bench_with_input(BenchmarkId::from_parameter(sigma), &sigma, |b, &s| {
            b.iter(|| smooth(&frame, s).unwrap())
        });
    }
    group.finish();
}

fn bench_detect(c: &mut Criterion) {
    let frame = poisson_frame(256, 256, 40.0, 7);
    let region = RegionSpec::default();
    c.bench_function("detect_256_sigma2", |b| {
        b.iter(|| detect(&frame, &region, 2.0, 1.0, InfiniteMode::MaxPixelValue).unwrap())
    });
}

fn bench_summaries(c: &mut Criterion) {
    let mut rng = SplitMix64::new(3);
    let lifetimes: Vec<f64> = (0..10_000).map(|_| rng.next_f64() * 10.0).collect();
    let v = LifetimeVector::new(lifetimes).unwrap();
    c.bench_function("alps_10k", |b| b.iter(|| v.alps().unwrap()));
    c.bench_function("entropy_10k", |b| b.iter(|| v.persistent_entropy().unwrap()));
}

criterion_group!(benches, bench_smoothing, bench_detect, bench_summaries);
criterion_main!(benches);
