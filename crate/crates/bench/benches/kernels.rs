use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use pstclock_core::de::cost;
use pstclock_core::{
    build_effective_matrix, decompose_effective, expand_profile, tick_statistics, ChainSpec,
    CouplingProfile, DEConfig,
};
use std::hint::black_box;

const SIZES: [usize; 4] = [20, 50, 120, 300];

fn chain(n: usize) -> ChainSpec {
    let scale = (50.0 / n as f64).sqrt();
    expand_profile(
        &CouplingProfile::PstWithTailOverrides {
            j0: 0.0172 * scale,
            tail_overrides: vec![0.6, 0.58, 0.53, 0.55],
            o: None,
        },
        n,
        1.0,
    )
    .unwrap()
}

fn decomposition(c: &mut Criterion) {
    let mut group = c.benchmark_group("decompose");
    for n in SIZES {
        let matrix = build_effective_matrix(&chain(n));
        group.bench_with_input(BenchmarkId::from_parameter(n), &matrix, |b, m| {
            b.iter(|| decompose_effective(black_box(m)).unwrap())
        });
    }
    group.finish();
}

fn statistics(c: &mut Criterion) {
    let mut group = c.benchmark_group("statistics");
    for n in SIZES {
        let spectrum = decompose_effective(&build_effective_matrix(&chain(n))).unwrap();
        group.bench_with_input(BenchmarkId::from_parameter(n), &spectrum, |b, s| {
            b.iter(|| tick_statistics(black_box(s)).unwrap())
        });
    }
    group.finish();
}

fn window_cost(c: &mut Criterion) {
    let mut group = c.benchmark_group("cost");
    group.sample_size(10);
    let config = DEConfig::default();
    for n in SIZES {
        let params = vec![0.6, 0.58, 0.53, 0.55, 0.0172 * (50.0 / n as f64).sqrt()];
        group.bench_with_input(BenchmarkId::from_parameter(n), &params, |b, p| {
            b.iter(|| cost(black_box(p), n, &config))
        });
    }
    group.finish();
}

criterion_group!(benches, decomposition, statistics, window_cost);
criterion_main!(benches);
