use avr_bench::{random_corpus, random_sequence};
use avr_core::{contextualize, cost_matrix, draq, dtw, RandomPathConfig, RetrievalIndex};
use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use std::hint::black_box;

fn bench_contextualize(c: &mut Criterion) {
    let seq = random_sequence("s", 256, 128, 1);
    c.bench_function("contextualize/256x128", |b| {
        b.iter(|| contextualize(black_box(&seq)))
    });
}

fn bench_dtw(c: &mut Criterion) {
    let mut group = c.benchmark_group("dtw");
    for n in [64, 128, 256] {
        let a = contextualize(&random_sequence("a", n, 64, 2));
        let b = contextualize(&random_sequence("b", n, 64, 3));
        let costs = cost_matrix(&a, &b).unwrap();
        group.bench_with_input(BenchmarkId::new("cost_matrix", n), &n, |bench, _| {
            bench.iter(|| cost_matrix(black_box(&a), black_box(&b)).unwrap())
        });
        group.bench_with_input(BenchmarkId::new("path", n), &n, |bench, _| {
            bench.iter(|| dtw(black_box(&costs)))
        });
    }
    group.finish();
}

fn bench_draq(c: &mut Criterion) {
    let a = contextualize(&random_sequence("a", 128, 64, 4));
    let b = contextualize(&random_sequence("b", 128, 64, 5));
    let costs = cost_matrix(&a, &b).unwrap();
    let cfg = RandomPathConfig::new(100, 0).unwrap();
    c.bench_function("draq/128x128/k100", |bench| {
        bench.iter(|| draq(black_box(&costs), &cfg))
    });
}

fn bench_query_topk(c: &mut Criterion) {
    let corpus = random_corpus(1000, 30, 90, 128, 6);
    let index = RetrievalIndex::from_sequences(&corpus).unwrap();
    let query = random_sequence("q", 60, 128, 7);
    c.bench_function("query_topk/1000x128/k10", |b| {
        b.iter(|| index.query_topk(black_box(&query), 10).unwrap())
    });
}

criterion_group!(
    benches,
    bench_contextualize,
    bench_dtw,
    bench_draq,
    bench_query_topk
);
criterion_main!(benches);
