//! Sequential against rayon-parallel execution of the data-parallel sweeps.
//!
//! Without the `parallel` feature both variants run sequentially, which makes
//! the group a quick check that the fallback costs nothing extra.

use std::f64::consts::FRAC_PI_2;
use std::hint::black_box;
use std::time::Duration;

use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};

use tsfuzzy::analysis::{
    box_grid, comparison_cases, estimate_da_augmented, omega_region_check, run_comparison, ComparisonCase,
};
use tsfuzzy::conditions::build;
use tsfuzzy::sdp::{solve_feasibility, BarrierSolver};
use tsfuzzy::verify::simulate_batch;
use tsfuzzy::{Certificate, Exec, MethodKind, ModelBundle, SolverConfig};

const MODES: [(&str, Exec); 2] = [("sequential", Exec::Sequential), ("parallel", Exec::Parallel)];

fn trajectories(c: &mut Criterion) {
    let b = ModelBundle::example1();
    let spec = b.memberships.as_ref().unwrap();
    let starts: Vec<Vec<f64>> = (0..16)
        .map(|i| {
            let t = i as f64 / 16.0 * std::f64::consts::TAU;
            vec![1.2 * t.cos(), 1.5 * t.sin()]
        })
        .collect();
    let mut g = c.benchmark_group("simulate_batch");
    g.sample_size(10);
    for (name, exec) in MODES {
        g.bench_with_input(BenchmarkId::from_parameter(name), &exec, |bench, &exec| {
            bench.iter(|| simulate_batch(&b.model, spec, 3.0, black_box(&starts), 5.0, 1e-3, exec))
        });
    }
    g.finish();
}

fn omega_grid(c: &mut Criterion) {
    let b = ModelBundle::example1();
    let spec = b.memberships.as_ref().unwrap();
    let grid = box_grid(&[-FRAC_PI_2, -3.0], &[FRAC_PI_2, 3.0], &[200, 200]);
    let mut g = c.benchmark_group("omega_region_check");
    for (name, exec) in MODES {
        g.bench_with_input(BenchmarkId::from_parameter(name), &exec, |bench, &exec| {
            bench.iter(|| omega_region_check(&b.model, spec, &[1.0, 1.0], 3.0, black_box(&grid), 1e-4, exec))
        });
    }
    g.finish();
}

fn augmented_region(c: &mut Criterion) {
    let b = ModelBundle::example1();
    let spec = b.memberships.as_ref().unwrap();
    let method = MethodKind::AugmentedSlack;
    let problem = build(&method, &b.model, b.jacobian.as_ref(), 3.0).unwrap();
    let out = solve_feasibility(&problem, &SolverConfig::default()).unwrap();
    let cert =
        Certificate::from_assignment(method, 3.0, out.t_star, &problem, out.assignment.as_ref().unwrap()).unwrap();
    let mut g = c.benchmark_group("estimate_da_augmented");
    for (name, exec) in MODES {
        g.bench_with_input(BenchmarkId::from_parameter(name), &exec, |bench, &exec| {
            bench.iter(|| estimate_da_augmented(&cert, spec, b.model.region(), 20_000, exec))
        });
    }
    g.finish();
}

fn lambda_searches(c: &mut Criterion) {
    let b = ModelBundle::example1();
    let keep = ["quadratic", "mozelli phi=2", "mozelli phi=1", "tanaka phi=0.1"];
    let cases: Vec<ComparisonCase> = comparison_cases(b.model.r())
        .into_iter()
        .filter(|c| keep.contains(&c.label.as_str()))
        .collect();
    let solver = BarrierSolver::default();
    let mut g = c.benchmark_group("run_comparison");
    g.sample_size(10).measurement_time(Duration::from_secs(10));
    for (name, exec) in MODES {
        g.bench_with_input(BenchmarkId::from_parameter(name), &exec, |bench, &exec| {
            bench.iter(|| {
                run_comparison(
                    &cases,
                    &b.model,
                    b.jacobian.as_ref(),
                    (0.001, 100.0),
                    1e-2,
                    &solver,
                    exec,
                )
            })
        });
    }
    g.finish();
}

criterion_group!(benches, trajectories, omega_grid, augmented_region, lambda_searches);
criterion_main!(benches);
