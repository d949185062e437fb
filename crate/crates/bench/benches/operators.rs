use std::hint::black_box;

use bellman_core::dp::{exact_q_pi, value_iteration};
use bellman_core::mdp::random_mdp;
use bellman_core::operators::{apply_advantage, apply_consistent, apply_optimality_q};
use bellman_core::{Policy, QTable};
use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};

fn operators(c: &mut Criterion) {
    let mut group = c.benchmark_group("apply");
    for n in [10, 50, 200] {
        let m = random_mdp(1, n, 4, (-1.0, 1.0), 0.95).unwrap();
        let q = QTable::zeros(n, 4);
        let pi = Policy::uniform(n, 4);
        group.bench_with_input(BenchmarkId::new("optimality-q", n), &n, |b, _| {
            b.iter(|| apply_optimality_q(black_box(&m), black_box(&q)).unwrap())
        });
        group.bench_with_input(BenchmarkId::new("consistent", n), &n, |b, _| {
            b.iter(|| apply_consistent(black_box(&m), black_box(&q)).unwrap())
        });
        group.bench_with_input(BenchmarkId::new("advantage", n), &n, |b, _| {
            b.iter(|| apply_advantage(black_box(&m), &pi, black_box(&q), 0.5).unwrap())
        });
    }
    group.finish();
}

fn solvers(c: &mut Criterion) {
    let m = random_mdp(2, 50, 4, (-1.0, 1.0), 0.9).unwrap();
    let pi = Policy::uniform(50, 4);
    c.bench_function("value iteration 50x4", |b| b.iter(|| value_iteration(black_box(&m), 1e-10, 100_000).unwrap()));
    c.bench_function("exact q_pi 50x4", |b| b.iter(|| exact_q_pi(black_box(&m), &pi).unwrap()));
}

criterion_group!(benches, operators, solvers);
criterion_main!(benches);
