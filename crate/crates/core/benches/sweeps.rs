use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use std::hint::black_box;

use sandflux::geometry::{ProblemSpec, ShapeSpec};
use sandflux::grid::divergence_with;
use sandflux::{Execution, FluxField, Grid, ProblemFields, Solver, SolverParams};

fn two_disks(n: usize) -> ProblemFields {
    let domain = [0.0, 0.0, 1.0, 1.0];
    let mut spec = ProblemSpec::new(domain);
    spec.sources
        .push(ShapeSpec::disk((0.3, 0.5), 0.15, 1.0).unwrap());
    spec.sources
        .push(ShapeSpec::disk((0.7, 0.5), 0.15, -1.0).unwrap());
    ProblemFields::from_spec(&spec, Grid::covering(domain, n).unwrap(), 4).unwrap()
}

const MODES: [(&str, Execution); 2] = [
    ("sequential", Execution::Sequential),
    ("parallel", Execution::Parallel),
];

fn time_step(c: &mut Criterion) {
    let mut group = c.benchmark_group("time_step");
    group.sample_size(10);
    for n in [64, 192] {
        let fields = two_disks(n);
        for (name, execution) in MODES {
            let params = SolverParams {
                execution,
                ..SolverParams::for_problem(&fields)
            };
            let solver = Solver::new(&fields, params).unwrap();
            let mut warm = solver.initial_state();
            for _ in 0..20 {
                solver.advance_step(&mut warm).unwrap();
            }
            group.bench_with_input(BenchmarkId::new(name, n), &warm, |b, warm| {
                b.iter_batched(
                    || warm.clone(),
                    |mut state| {
                        solver.advance_step(&mut state).unwrap();
                        black_box(state.step)
                    },
                    criterion::BatchSize::LargeInput,
                )
            });
        }
    }
    group.finish();
}

fn divergence(c: &mut Criterion) {
    let mut group = c.benchmark_group("divergence");
    let n = 512;
    let grid = Grid::new(n, n, 1.0 / n as f64, (0.0, 0.0)).unwrap();
    let q = FluxField::from_fn(
        &grid,
        |i, j| ((i * 7 + j) % 13) as f64,
        |i, j| ((i + 3 * j) % 11) as f64,
    );
    for (name, execution) in MODES {
        group.bench_function(BenchmarkId::new(name, n), |b| {
            b.iter(|| black_box(divergence_with(&q, &grid, execution)))
        });
    }
    group.finish();
}

criterion_group!(benches, time_step, divergence);
criterion_main!(benches);
