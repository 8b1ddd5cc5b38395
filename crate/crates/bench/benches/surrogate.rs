use std::hint::black_box;

use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion, Throughput};
use textlime::verify::{run_repeated, RunConfig};
use textlime::{explain, explain_batch, sample_batch, Bandwidth, ExplainConfig};
use textlime_bench::{reference_document, reference_tree};

fn explain_single_run(c: &mut Criterion) {
    let local = reference_document();
    let model = reference_tree(&local);
    let nu = Bandwidth::new(0.25).unwrap();
    let mut group = c.benchmark_group("explain");
    for n in [1000usize, 5000, 20000] {
        group.throughput(Throughput::Elements(n as u64));
        group.bench_with_input(BenchmarkId::new("sample_batch", n), &n, |b, &n| {
            b.iter(|| sample_batch(local.dictionary(), black_box(n), nu, 3).unwrap())
        });
        let batch = sample_batch(local.dictionary(), n, nu, 3).unwrap();
        group.bench_with_input(BenchmarkId::new("fit", n), &batch, |b, batch| {
            b.iter(|| explain_batch(&model, &local, black_box(batch), 0.0).unwrap())
        });
        let config = ExplainConfig { n, nu, ridge: 0.0, seed: 3 };
        group.bench_with_input(BenchmarkId::new("end_to_end", n), &config, |b, config| {
            b.iter(|| explain(&model, &local, black_box(config)).unwrap())
        });
    }
    group.finish();
}

fn repeated_runs(c: &mut Criterion) {
    let local = reference_document();
    let model = reference_tree(&local);
    let mut group = c.benchmark_group("run_repeated");
    group.sample_size(10);
    let config = RunConfig { n_exp: 100, ..RunConfig::default() };
    group.bench_function("defaults", |b| b.iter(|| run_repeated(&model, &local, black_box(&config)).unwrap()));
    group.finish();
}

criterion_group!(benches, explain_single_run, repeated_runs);
criterion_main!(benches);
