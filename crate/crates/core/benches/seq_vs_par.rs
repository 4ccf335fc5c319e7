//! Sequential vs rayon-parallel execution of the data-parallel kernels.

use std::hint::black_box;

use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use ventriq::cycle::{build_series_with, MetricKind, SeriesOptions};
use ventriq::fitting::{gp_fit_xy, GpHyper};
use ventriq::metrics::{hausdorff_with, weight_map_with, DistanceUnits, LossConfig};
use ventriq::morph::{erode_with, StructuringElement};
use ventriq::noise::{corrupt_stack, NoiseModel};
use ventriq::phantom::{generate_with, PhantomSpec};
use ventriq::Exec;

const MODES: [(&str, Exec); 2] = [("sequential", Exec::Sequential), ("parallel", Exec::Parallel)];

fn kernels(c: &mut Criterion) {
    let ph = generate_with(&PhantomSpec::default(), Exec::Sequential).unwrap();
    let ed = ph.series.phases()[0].mask.clone();
    let es = ph.series.phases()[5].mask.clone();
    let intensity = ph.series.phases()[0].intensity.clone().unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let x: Vec<f64> = (0..13).map(f64::from).collect();
    let y: Vec<f64> = x.iter().map(|t| 300.0 + 100.0 * (t * 0.5).cos() + rng.random_range(-5.0..5.0)).collect();
    let cfg = LossConfig::default();

    let mut g = c.benchmark_group("kernels");
    g.sample_size(20);
    for (name, exec) in MODES {
        g.bench_with_input(BenchmarkId::new("erode_cube26", name), &exec, |b, &e| {
            b.iter(|| erode_with(black_box(&ed), StructuringElement::Cube26, e))
        });
        g.bench_with_input(BenchmarkId::new("weight_map", name), &exec, |b, &e| {
            b.iter(|| weight_map_with(black_box(&ed), &cfg, e).unwrap())
        });
        g.bench_with_input(BenchmarkId::new("hausdorff", name), &exec, |b, &e| {
            b.iter(|| hausdorff_with(black_box(&ed), black_box(&es), DistanceUnits::Mm, e).unwrap())
        });
        g.bench_with_input(BenchmarkId::new("rician_noise", name), &exec, |b, &e| {
            b.iter(|| corrupt_stack(black_box(&intensity), NoiseModel::Rician, 10.0, 7, e).unwrap())
        });
        g.bench_with_input(BenchmarkId::new("surface_series", name), &exec, |b, &e| {
            let opts = SeriesOptions { exec: e, ..Default::default() };
            b.iter(|| build_series_with(black_box(&ph.series), MetricKind::SurfaceArea, opts))
        });
        g.bench_with_input(BenchmarkId::new("gp_fit", name), &exec, |b, &e| {
            b.iter(|| gp_fit_xy(black_box(&x), black_box(&y), &GpHyper::default(), e).unwrap())
        });
        g.bench_with_input(BenchmarkId::new("phantom", name), &exec, |b, &e| {
            b.iter(|| generate_with(black_box(&PhantomSpec::default()), e).unwrap())
        });
    }
    g.finish();
}

criterion_group!(benches, kernels);
criterion_main!(benches);
