use criterion::{criterion_group, criterion_main, Criterion};
use std::hint::black_box;

use ditwpc::extraction::{extract, ExtractionConfig};
use ditwpc::raster::{render_curve, RasterConfig};
use ditwpc_bench::reference_curve;

fn bench(c: &mut Criterion) {
    let truth = reference_curve();
    for (name, raster, cfg) in [
        ("extract_256", RasterConfig::default(), ExtractionConfig::default()),
        ("extract_64", RasterConfig::desk(), ExtractionConfig::desk()),
    ] {
        let img = render_curve(&truth, &raster);
        c.bench_function(name, |b| b.iter(|| extract(black_box(&img), &raster, &cfg).unwrap()));
    }
    let raster = RasterConfig::default();
    c.bench_function("render_curve_256", |b| b.iter(|| render_curve(black_box(&truth), &raster)));
}

criterion_group!(benches, bench);
criterion_main!(benches);
