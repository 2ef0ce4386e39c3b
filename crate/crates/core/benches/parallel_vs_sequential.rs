use std::hint::black_box;

use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use nalgebra::DVector;

use allforall::algorithms::{afa, RunOptions};
use allforall::experiment::{run_experiment, Algo, ExperimentConfig};
use allforall::mixing::build_mixing;
use allforall::oracle::OracleKind;
use allforall::similarity::{quadratic_bias, validate_assumptions_with};
use allforall::{AgentDistribution, AgentProblem, Execution, Point, RngStream};

const MODES: [(&str, Execution); 2] = [("sequential", Execution::Sequential), ("parallel", Execution::Parallel)];

fn agents(n: usize, dim: usize) -> (Vec<AgentProblem>, Vec<Point>) {
    let mut s = RngStream::domain(7, allforall::rng::Domain::Aux);
    let means: Vec<Point> = (0..n).map(|_| DVector::from_fn(dim, |_, _| s.uniform())).collect();
    let problems = means
        .iter()
        .map(|m| {
            AgentProblem::mean_estimation(AgentDistribution::GaussianVector {
                mean: m.iter().copied().collect(),
                std: 0.3,
            })
            .unwrap()
        })
        .collect();
    (problems, means)
}

fn seed_sweep(c: &mut Criterion) {
    let cfg = ExperimentConfig {
        n_agents: 20,
        samples_per_agent: 200,
        algorithms: vec![Algo::AfaAdaptive, Algo::Local, Algo::SingleModel],
        seeds: (1..=8).collect(),
        ..ExperimentConfig::default()
    };
    let mut group = c.benchmark_group("seed_sweep");
    group.sample_size(10);
    for (name, exec) in MODES {
        group.bench_function(name, |b| b.iter(|| run_experiment(black_box(&cfg), None, exec).unwrap()));
    }
    group.finish();
}

fn sync_round(c: &mut Criterion) {
    let mut group = c.benchmark_group("sync_afa");
    group.sample_size(10);
    for n in [64, 256] {
        let (problems, means) = agents(n, 16);
        let plan = build_mixing(&quadratic_bias(&means).unwrap(), 1.0).unwrap();
        for (name, exec) in MODES {
            let opts = RunOptions::new(3, OracleKind::Synchronous, 20).with_exec(exec).log_every(0);
            group.bench_with_input(BenchmarkId::new(name, n), &n, |b, _| {
                b.iter(|| afa(&problems, &plan, 1e-3, &opts).unwrap())
            });
        }
    }
    group.finish();
}

fn assumption_grid(c: &mut Criterion) {
    let (problems, means) = agents(48, 8);
    let bias = quadratic_bias(&means).unwrap();
    let mut group = c.benchmark_group("validation");
    for (name, exec) in MODES {
        group.bench_function(name, |b| {
            b.iter(|| validate_assumptions_with(exec, &problems, &bias, &[], &[]).unwrap())
        });
    }
    group.finish();
}

criterion_group!(benches, seed_sweep, sync_round, assumption_grid);
criterion_main!(benches);
