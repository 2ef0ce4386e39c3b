use nalgebra::{DMatrix, DVector};
use proptest::prelude::*;

use allforall::algorithms::{afa, RunOptions};
use allforall::experiment::checkpoints;
use allforall::metrics::{RecordRow, RunRecord};
use allforall::mixing::{adaptive_schedule, build_mixing, inverse_cluster_sum, MixingPlan};
use allforall::oracle::{lift_gradient, next_active_set, OracleKind, SampleLedger};
use allforall::similarity::{neighborhood_count, noisy_bias, quadratic_bias, BiasFlavor, BiasMatrix};
use allforall::{AgentDistribution, AgentProblem, Execution, Point, RngStream};

fn points(max_n: usize, max_d: usize) -> impl Strategy<Value = Vec<Point>> {
    (1..=max_n, 1..=max_d).prop_flat_map(|(n, d)| {
        prop::collection::vec(prop::collection::vec(0.0..1.0f64, d), n)
            .prop_map(|v| v.into_iter().map(DVector::from_vec).collect())
    })
}

fn problems_for(p: &[Point]) -> Vec<AgentProblem> {
    p.iter()
        .map(|m| {
            let p = m.iter().map(|v| v.clamp(0.01, 0.99)).collect();
            AgentProblem::mean_estimation(AgentDistribution::BernoulliVector { p }).unwrap()
        })
        .collect()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn mixing_rows_are_stochastic_and_w_factors(p in points(12, 3), eps in 1e-3..1.0f64) {
        let b = quadratic_bias(&p).unwrap();
        let plan = build_mixing(&b, eps).unwrap();
        let (l, w) = (plan.lambda(), plan.w());
        let n = p.len();
        for i in 0..n {
            prop_assert!((l.row(i).sum() - 1.0).abs() <= 1e-12);
            prop_assert!(l.row(i).iter().all(|v| *v >= 0.0));
            for j in 0..n {
                let v: f64 = (0..n).map(|k| l[(i, k)] * l[(j, k)]).sum();
                prop_assert!((w[(i, j)] - v).abs() <= 1e-12);
                prop_assert_eq!(w[(i, j)], w[(j, i)]);
            }
        }
    }

    #[test]
    fn support_is_the_brute_force_neighbourhood(p in points(12, 3), eps in 1e-3..1.0f64) {
        let b = quadratic_bias(&p).unwrap();
        let plan = build_mixing(&b, eps).unwrap();
        for i in 0..p.len() {
            let brute: Vec<usize> = (0..p.len()).filter(|&j| 2.0 * b.get(i, j) <= eps).collect();
            prop_assert!(brute.contains(&i));
            let row: Vec<usize> = (0..p.len()).filter(|&j| plan.lambda()[(i, j)] != 0.0).collect();
            prop_assert_eq!(&row, &brute);
            prop_assert_eq!(neighborhood_count(&b, i, eps / 2.0), brute.len());
            for &j in &brute {
                prop_assert_eq!(plan.lambda()[(i, j)], 1.0 / brute.len() as f64);
            }
            // W_ij > 0 exactly when i and j share a neighbour
            let shared: Vec<usize> = (0..p.len())
                .filter(|&j| brute.iter().any(|&k| 2.0 * b.get(j, k) <= eps))
                .collect();
            prop_assert_eq!(plan.support(i), shared.as_slice());
        }
    }

    #[test]
    fn widening_eps_only_grows_neighbourhoods(p in points(10, 2), eps in 1e-3..0.5f64) {
        let b = quadratic_bias(&p).unwrap();
        let (narrow, wide) = (build_mixing(&b, eps).unwrap(), build_mixing(&b, 2.0 * eps).unwrap());
        for i in 0..p.len() {
            prop_assert!(narrow.support(i).iter().all(|j| wide.support(i).contains(j)));
        }
        prop_assert!(inverse_cluster_sum(&b, 2.0 * eps) <= inverse_cluster_sum(&b, eps));
        prop_assert!(inverse_cluster_sum(&b, eps) <= p.len() as f64);
    }

    #[test]
    fn root_bias_is_a_metric(p in points(12, 4)) {
        let b = quadratic_bias(&p).unwrap();
        let d = |i: usize, j: usize| (2.0 * b.get(i, j)).sqrt();
        let n = p.len();
        for i in 0..n {
            for j in 0..n {
                prop_assert_eq!(b.get(i, j), b.get(j, i));
                for k in 0..n {
                    prop_assert!(d(i, k) <= d(i, j) + d(j, k) + 1e-12);
                }
            }
        }
    }

    #[test]
    fn bias_csv_round_trips(p in points(9, 2)) {
        let b = quadratic_bias(&p).unwrap();
        let mut buf = Vec::new();
        b.write_csv(&mut buf).unwrap();
        let text = String::from_utf8(buf.clone()).unwrap();
        let header = format!("n={}", p.len());
        prop_assert_eq!(text.lines().next(), Some(header.as_str()));
        let back = BiasMatrix::read_csv(buf.as_slice(), BiasFlavor::FunctionGap).unwrap();
        prop_assert_eq!(back.entries(), b.entries());
    }

    #[test]
    fn zero_noise_bias_is_exact(p in prop::collection::vec(0.0..1.0f64, 1..10), seed in any::<u64>()) {
        let mut s = RngStream::new(seed, allforall::rng::Domain::BiasNoise, 0, 0);
        let noisy = noisy_bias(&p, 0.0, &mut s).unwrap();
        let pts: Vec<Point> = p.iter().map(|v| DVector::from_element(1, *v)).collect();
        let exact = quadratic_bias(&pts).unwrap();
        prop_assert_eq!(noisy.entries(), exact.entries());
    }

    #[test]
    fn async_lift_is_unbiased(n in 1usize..9, dim in 1usize..4, seed in any::<u64>()) {
        let mut s = RngStream::new(seed, allforall::rng::Domain::Aux, 0, 0);
        let g: Vec<Point> = (0..n).map(|_| DVector::from_fn(dim, |_, _| s.normal())).collect();
        let mut mean = vec![DVector::<f64>::zeros(dim); n];
        for (i, gi) in g.iter().enumerate() {
            let lifted = lift_gradient(OracleKind::Asynchronous, n, dim, &[i], &[(i, gi.clone())]).unwrap();
            for (m, l) in mean.iter_mut().zip(&lifted) {
                *m += l / n as f64;
            }
        }
        for (m, gi) in mean.iter().zip(&g) {
            prop_assert!((m - gi).amax() <= 1e-12 * (1.0 + gi.amax()));
        }
        let all: Vec<usize> = (0..n).collect();
        let raw: Vec<(usize, Point)> = g.iter().cloned().enumerate().collect();
        prop_assert_eq!(lift_gradient(OracleKind::Synchronous, n, dim, &all, &raw).unwrap(), g);
    }

    #[test]
    fn ledger_conserves_samples(n in 1usize..12, rounds in 0u64..200, seed in any::<u64>(), sync in any::<bool>()) {
        let kind = if sync { OracleKind::Synchronous } else { OracleKind::Asynchronous };
        let mut ledger = SampleLedger::new(n);
        for k in 0..rounds {
            let active = next_active_set(kind, n, &mut RngStream::schedule(seed, k));
            prop_assert!(active.iter().all(|&i| i < n));
            ledger.record(&active);
        }
        prop_assert!(ledger.is_consistent());
        let per_round = if sync { n as u64 } else { 1 };
        prop_assert_eq!(ledger.total(), rounds * per_round);
    }

    #[test]
    fn afa_modes_agree(p in points(6, 2), seed in any::<u64>(), sync in any::<bool>()) {
        let problems = problems_for(&p);
        let plan = build_mixing(&quadratic_bias(&p).unwrap(), 0.2).unwrap();
        let kind = if sync { OracleKind::Synchronous } else { OracleKind::Asynchronous };
        let opts = RunOptions::new(seed, kind, 60);
        let seq = afa(&problems, &plan, 0.05, &opts.clone().with_exec(Execution::Sequential)).unwrap();
        let par = afa(&problems, &plan, 0.05, &opts.with_exec(Execution::Parallel)).unwrap();
        prop_assert_eq!(seq.iterates, par.iterates);
        prop_assert_eq!(seq.ledger, par.ledger);
    }

    #[test]
    fn uniform_plan_keeps_agents_together(p in points(6, 2), seed in any::<u64>()) {
        let problems = problems_for(&p);
        let n = p.len();
        let run = afa(&problems, &MixingPlan::uniform(n), 0.03, &RunOptions::new(seed, OracleKind::Asynchronous, 80)).unwrap();
        for x in &run.iterates {
            prop_assert!((x - &run.iterates[0]).amax() <= 1e-12);
        }
    }

    #[test]
    fn schedule_stages_tile_the_horizon(p in points(10, 2), horizon in 1u64..100_000, d in 0.1..3.0f64, bound in 0.1..3.0f64) {
        let b = quadratic_bias(&p).unwrap();
        let sched = adaptive_schedule(&b, d, bound, horizon).unwrap();
        let stages = sched.stages();
        prop_assert_eq!(stages[0].start, 0);
        prop_assert!(stages.last().unwrap().end() >= horizon);
        for (k, s) in stages.iter().enumerate() {
            prop_assert_eq!(s.eps, 0.5f64.powi(k as i32));
            prop_assert!(s.step > 0.0 && s.rounds >= 1);
            prop_assert!((s.plan.eps() - s.eps).abs() == 0.0);
            if k > 0 {
                prop_assert_eq!(s.start, stages[k - 1].end());
            }
        }
        for r in [0, horizon / 2, horizon - 1] {
            let (idx, beyond) = sched.stage_at(r);
            prop_assert!(!beyond);
            prop_assert!(stages[idx].start <= r && r < stages[idx].end());
        }
    }

    #[test]
    fn checkpoints_are_sorted_and_bounded(first in 1u64..1000, extra in 0u64..1_000_000, count in 0usize..80) {
        let last = first + extra;
        let c = checkpoints(first, last, count);
        prop_assert_eq!(*c.last().unwrap(), last);
        prop_assert!(c.windows(2).all(|w| w[0] < w[1]));
        prop_assert!(c.iter().all(|&v| v >= first && v <= last));
    }

    #[test]
    fn record_csv_round_trips(errs in prop::collection::vec((0.0..10.0f64, 0.0..10.0f64), 1..30), seed in any::<u64>()) {
        let mut rec = RunRecord::new("afa", seed);
        for (k, (a, m)) in errs.iter().enumerate() {
            rec.push(RecordRow {
                round: k as u64 + 1,
                samples_total: 3 * (k as u64 + 1),
                avg_error: *a,
                max_error: a.max(*m),
                eps_stage: 0.5,
            });
        }
        let mut buf = Vec::new();
        rec.write_csv(&mut buf).unwrap();
        prop_assert_eq!(RunRecord::read_csv(buf.as_slice()).unwrap(), rec);
    }

    #[test]
    fn keyed_streams_are_reproducible(seed in any::<u64>(), agent in 0usize..100, round in any::<u64>()) {
        let draw = |s: &mut RngStream| (0..8).map(|_| s.uniform()).collect::<Vec<_>>();
        let a = draw(&mut RngStream::sample(seed, agent, round));
        prop_assert_eq!(&a, &draw(&mut RngStream::sample(seed, agent, round)));
        prop_assert_ne!(&a, &draw(&mut RngStream::sample(seed, agent + 1, round)));
        prop_assert!(a.iter().all(|u| (0.0..1.0).contains(u)));
    }
}

#[test]
fn identity_and_uniform_plans() {
    let id = MixingPlan::identity(5);
    assert_eq!(id.w(), &DMatrix::<f64>::identity(5, 5));
    let u = MixingPlan::uniform(5);
    assert!(u.w().iter().all(|v| (v - 0.2).abs() <= 1e-15));
}
