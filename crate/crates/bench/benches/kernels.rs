use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use std::hint::black_box;

use sheetvar_core::fgn::{FieldSampler, HurstVector, SamplerOptions};
use sheetvar_core::hermite::power_expansion;
use sheetvar_core::lattice::{cumulative_field, LatticeShape};
use sheetvar_core::moments::{diagram_moment, exact_variation_moment, DEFAULT_GUARD_CAP};
use sheetvar_core::rng::SeedSpec;
use sheetvar_core::variations::{fluctuation, multilinear_interpolate, power_variation, EvalMode};

fn sampling(c: &mut Criterion) {
    let mut g = c.benchmark_group("sample_increments");
    let hurst = HurstVector::new(vec![0.3, 0.6]).unwrap();
    for n in [64usize, 256] {
        let shape = LatticeShape::new(vec![n, n]).unwrap();
        let sampler = FieldSampler::new(&hurst, &shape, &SamplerOptions::default()).unwrap();
        g.bench_with_input(BenchmarkId::from_parameter(n), &n, |b, _| {
            let mut r = 0;
            b.iter(|| {
                r += 1;
                black_box(sampler.sample_increments(SeedSpec::new(1, r)))
            })
        });
    }
    g.finish();
}

fn variations(c: &mut Criterion) {
    let hurst = HurstVector::new(vec![0.6, 0.6]).unwrap();
    let shape = LatticeShape::new(vec![256, 256]).unwrap();
    let sampler = FieldSampler::new(&hurst, &shape, &SamplerOptions::default()).unwrap();
    let incr = sampler.sample_increments(SeedSpec::new(2, 0));
    c.bench_function("prefix_sums_256x256", |b| b.iter(|| black_box(cumulative_field(&incr).unwrap())));
    c.bench_function("power_variation_256x256", |b| b.iter(|| black_box(power_variation(&incr, 2).unwrap())));
    let v = power_variation(&incr, 2).unwrap();
    let fl = fluctuation(&v, &hurst, 1e-12).unwrap();
    c.bench_function("multilinear_eval", |b| {
        b.iter(|| {
            black_box(multilinear_interpolate(v.values(), black_box(&[0.377, 0.812])).unwrap());
            black_box(fl.eval(black_box(&[0.377, 0.812]), EvalMode::Multilinear).unwrap())
        })
    });
}

fn oracle(c: &mut Criterion) {
    let orders = [2usize, 4, 2, 4];
    let corr: Vec<f64> = (0..16).map(|i| if i % 5 == 0 { 1.0 } else { 0.3 }).collect();
    c.bench_function("diagram_moment_2424", |b| b.iter(|| black_box(diagram_moment(&orders, &corr).unwrap())));
    let hurst = HurstVector::new(vec![0.75, 0.75]).unwrap();
    let l = LatticeShape::new(vec![3, 3]).unwrap();
    let e = power_expansion(4).unwrap();
    c.bench_function("exact_variation_moment_rho4_p4_3x3", |b| {
        b.iter(|| black_box(exact_variation_moment(&hurst, &l, &e, 4, DEFAULT_GUARD_CAP).unwrap()))
    });
}

criterion_group!(benches, sampling, variations, oracle);
criterion_main!(benches);
