use std::hint::black_box;

use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use lsm_bench::{class_summary, synthetic};
use lsm_core::ingest::{grow_instances, Connectivity};
use lsm_core::metrics::wasserstein2;
use lsm_core::query::vlmaps_binary_query;
use lsm_core::PostProcessParams;

fn bench_wasserstein(c: &mut Criterion) {
    let mut group = c.benchmark_group("wasserstein2");
    for dim in [16, 64, 256] {
        let (a, b) = (class_summary(dim, 2 * dim, 1), class_summary(dim, 2 * dim, 2));
        group.bench_with_input(BenchmarkId::from_parameter(dim), &dim, |bench, _| {
            bench.iter(|| wasserstein2(black_box(&a), black_box(&b)).unwrap())
        });
    }
    group.finish();
}

fn bench_query(c: &mut Criterion) {
    let mut group = c.benchmark_group("vlmaps_query");
    group.sample_size(20);
    for per_class in [1_000, 8_000] {
        let (map, lex) = synthetic(5, per_class, 64, 3);
        let (q, other) = (lex.get("class_0").unwrap(), lex.get("other").unwrap());
        group.bench_with_input(BenchmarkId::from_parameter(5 * per_class), &per_class, |bench, _| {
            bench.iter(|| vlmaps_binary_query(&map.embeddings, q, other, &PostProcessParams::default()).unwrap())
        });
    }
    group.finish();
}

fn bench_instances(c: &mut Criterion) {
    let mut group = c.benchmark_group("grow_instances");
    for per_class in [1_000, 8_000] {
        let (map, _) = synthetic(5, per_class, 8, 4);
        let sem = map.semantics.unwrap();
        group.bench_with_input(BenchmarkId::from_parameter(sem.len()), &sem, |bench, sem| {
            bench.iter(|| grow_instances(sem, sem.len(), Connectivity::Six))
        });
    }
    group.finish();
}

criterion_group!(benches, bench_wasserstein, bench_query, bench_instances);
criterion_main!(benches);
