use criterion::{black_box, criterion_group, criterion_main, Criterion, Throughput};

use herdopt::simulate::{simulate_wealth, SimulationSpec};
use herdopt_bench::baseline;

fn bench_euler_maruyama(c: &mut Criterion) {
    let problem = baseline(1.0 / 400.0, 0.0);
    let grid = problem.grid();
    let eta = problem.solve_eta().unwrap();
    let decision = problem.optimal_decision(&eta, &grid).unwrap();

    let mut group = c.benchmark_group("euler_maruyama");
    for n_paths in [1_000usize, 10_000] {
        let spec = SimulationSpec {
            n_paths,
            n_steps: 1000,
            seed: 42,
            retain_terminal: false,
        };
        group.throughput(Throughput::Elements((n_paths * 1000) as u64));
        group.bench_function(format!("paths_{n_paths}"), |b| {
            b.iter(|| {
                simulate_wealth(
                    black_box(&problem.market),
                    &problem.follower,
                    &decision,
                    &spec,
                )
                .unwrap()
            })
        });
    }
    group.finish();
}

criterion_group!(benches, bench_euler_maruyama);
criterion_main!(benches);
