use criterion::{criterion_group, criterion_main, Criterion};
use std::hint::black_box;

use ditwpc::benchmarks::{bsa_minimize, fit_benchmark, BenchmarkConfig, BenchmarkKind, SearchConfig};
use ditwpc_bench::reference_scatter;

fn bench(c: &mut Criterion) {
    let cfg = SearchConfig::default();
    c.bench_function("bsa_sphere_5d", |b| {
        b.iter(|| bsa_minimize(|x| x.iter().map(|v| v * v).sum(), black_box(&[(-5.0, 5.0); 5]), &cfg).unwrap())
    });
    let pairs = reference_scatter().pairs();
    let bcfg = BenchmarkConfig::default();
    let mut group = c.benchmark_group("fit_1400_points");
    group.sample_size(10);
    for kind in BenchmarkKind::ALL {
        group.bench_function(kind.name(), |b| b.iter(|| fit_benchmark(kind, black_box(&pairs), &bcfg).unwrap()));
    }
    group.finish();
}

criterion_group!(benches, bench);
criterion_main!(benches);
