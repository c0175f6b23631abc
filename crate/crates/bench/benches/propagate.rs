use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use parareal_bench::brusselator;
use parareal_core::{propagate, SolverConfig};

fn propagate_bench(c: &mut Criterion) {
    let sys = brusselator();
    let mut group = c.benchmark_group("propagate_brusselator_t20");
    for tol in [1e-4, 1e-8] {
        for (name, cfg) in [("dopri5", SolverConfig::explicit(tol)), ("radau5", SolverConfig::radau(tol))] {
            group.bench_with_input(BenchmarkId::new(name, tol), &cfg, |b, cfg| {
                b.iter(|| propagate(&sys, 0.0, 20.0, sys.u0(), cfg, None).unwrap())
            });
        }
    }
    group.finish();
}

criterion_group!(benches, propagate_bench);
criterion_main!(benches);
