use std::hint::black_box;

use busroute_bench::{cost_matrix, instance};
use busroute_core::{improve, min_buses, min_cost_assignment, route_all_schools, Mode, SolverParams};
use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};

fn hungarian(c: &mut Criterion) {
    let mut g = c.benchmark_group("hungarian");
    for n in [16, 64, 256] {
        let m = cost_matrix(n, n as u64);
        g.bench_with_input(BenchmarkId::from_parameter(n), &m, |b, m| {
            b.iter(|| min_cost_assignment(black_box(m)).unwrap())
        });
    }
    g.finish();
}

fn routing(c: &mut Criterion) {
    let params = SolverParams::default();
    let mut g = c.benchmark_group("routing");
    g.sample_size(10);
    for (k, n) in [(10, 200), (50, 1000), (100, 2000)] {
        let inst = instance(k, n);
        for mode in [Mode::Smcm, Mode::Pmcm] {
            g.bench_with_input(
                BenchmarkId::new(mode.to_string(), format!("{k}x{n}")),
                &inst,
                |b, inst| b.iter(|| route_all_schools(black_box(inst), mode, &params).unwrap()),
            );
        }
    }
    g.finish();
}

fn scheduling_and_improvement(c: &mut Criterion) {
    let params = SolverParams::default();
    let inst = instance(20, 400);
    let plan = route_all_schools(&inst, Mode::Pmcm, &params).unwrap();
    c.bench_function("min_buses/20x400", |b| {
        b.iter(|| min_buses(black_box(plan.trips()), &inst))
    });
    let mut g = c.benchmark_group("improve");
    g.sample_size(10);
    g.bench_function("20x400", |b| {
        b.iter(|| improve(black_box(&plan), &inst, &params).unwrap())
    });
    g.finish();
}

criterion_group!(benches, hungarian, routing, scheduling_and_improvement);
criterion_main!(benches);
