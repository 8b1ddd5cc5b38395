use std::hint::black_box;

use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use textlime::theory::{alpha, beta_indicator_product, sigma_set, ETermMethod, ETermTable, OmegaWeights};
use textlime::Bandwidth;

fn alpha_and_sigma(c: &mut Criterion) {
    let nu = Bandwidth::new(0.25).unwrap();
    let mut group = c.benchmark_group("closed_form");
    for d in [10usize, 100, 1000] {
        group.bench_with_input(BenchmarkId::new("alpha_2", d), &d, |b, &d| {
            b.iter(|| alpha(2, black_box(d), nu).unwrap())
        });
        group.bench_with_input(BenchmarkId::new("sigma_set", d), &d, |b, &d| {
            b.iter(|| sigma_set(black_box(d), nu).unwrap())
        });
        group.bench_with_input(BenchmarkId::new("beta_indicator_product", d), &d, |b, &d| {
            b.iter(|| beta_indicator_product(black_box(&[0, 1, 2]), d, nu).unwrap())
        });
    }
    group.finish();
}

fn e_terms(c: &mut Criterion) {
    let mut group = c.benchmark_group("e_terms");
    group.sample_size(10);
    for d in [8usize, 12, 16] {
        let omega = OmegaWeights::from_masses(&(1..=d).map(|k| 1.0 + (k % 5) as f64).collect::<Vec<_>>()).unwrap();
        group.bench_with_input(BenchmarkId::new("exact_table", d), &omega, |b, omega| {
            b.iter(|| ETermTable::compute(omega, ETermMethod::Exact).unwrap())
        });
        group.bench_with_input(BenchmarkId::new("mc_table_1e5", d), &omega, |b, omega| {
            b.iter(|| ETermTable::compute(omega, ETermMethod::MonteCarlo { n: 100_000, seed: 1 }).unwrap())
        });
    }
    group.finish();
}

criterion_group!(benches, alpha_and_sigma, e_terms);
criterion_main!(benches);
