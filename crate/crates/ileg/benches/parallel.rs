//! Parallel-vs-sequential comparison for the data-parallel hot paths:
//! Monte-Carlo policy evaluation and risk-parameter sweeps, plus the
//! (inherently serial) backward pass as a baseline.

use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use std::hint::black_box;

use ileg::approx::build_lq_model;
use ileg::problem::{make_cliff_world, SolverConfig};
use ileg::riccati::backward_pass;
use ileg::rollout::{monte_carlo_evaluate_par, monte_carlo_evaluate_seq};
use ileg::solver::{sigma_sweep_par, sigma_sweep_seq, solve};

fn bench_monte_carlo(c: &mut Criterion) {
    let problem = make_cliff_world();
    let cfg = SolverConfig {
        grid_steps: 150,
        mc_samples: 256,
        ..SolverConfig::default()
    };
    let solved = solve(&problem, &cfg, None).expect("cliff world solves");
    let mut group = c.benchmark_group("monte_carlo_256");
    group.bench_function(BenchmarkId::new("seq", cfg.mc_samples), |b| {
        b.iter(|| monte_carlo_evaluate_seq(black_box(&problem), &solved.policy, &cfg).unwrap())
    });
    group.bench_function(BenchmarkId::new("par", cfg.mc_samples), |b| {
        b.iter(|| monte_carlo_evaluate_par(black_box(&problem), &solved.policy, &cfg).unwrap())
    });
    group.finish();
}

fn bench_sigma_sweep(c: &mut Criterion) {
    let problem = make_cliff_world();
    let cfg = SolverConfig {
        grid_steps: 100,
        cost_tolerance: 1e-4,
        ..SolverConfig::default()
    };
    let sigmas = [45.0, 0.0, -100.0];
    let mut group = c.benchmark_group("sigma_sweep_3");
    group.sample_size(10);
    group.bench_function("seq", |b| {
        b.iter(|| sigma_sweep_seq(black_box(&problem), &cfg, &sigmas))
    });
    group.bench_function("par", |b| {
        b.iter(|| sigma_sweep_par(black_box(&problem), &cfg, &sigmas))
    });
    group.finish();
}

fn bench_backward_pass(c: &mut Criterion) {
    let problem = make_cliff_world().with_risk_param(35.0);
    let cfg = SolverConfig::default();
    let solved = solve(&problem, &cfg, None).expect("cliff world solves");
    let lq = build_lq_model(&problem, &solved.nominal, &cfg).unwrap();
    c.bench_function("backward_pass_300", |b| {
        b.iter(|| backward_pass(black_box(&lq)).unwrap())
    });
}

criterion_group!(benches, bench_monte_carlo, bench_sigma_sweep, bench_backward_pass);
criterion_main!(benches);
