use nalgebra::{DMatrix, DVector};

use super::{common_dim, RunOptions};
use crate::error::{check_dim, Result};
use crate::metrics::{apply_lambda, apply_lambda_t, averaged_error, ErrorTracker, RecordRow, RunRecord};
use crate::mixing::{adaptive_schedule, AdaptiveSchedule, MixingPlan};
use crate::oracle::{next_active_set, OracleKind, SampleLedger};
use crate::problem::{AgentProblem, Point};
use crate::rng::RngStream;
use crate::similarity::BiasMatrix;

#[derive(Clone, Debug)]
pub struct Trajectory {
    /// Final `x_i^K`, one per agent.
    pub iterates: Vec<Point>,
    /// Per-agent running averages, when requested.
    pub average: Option<Vec<Point>>,
    /// `x^0, …, x^K` when kept.
    pub history: Vec<Vec<Point>>,
    pub record: Option<RunRecord>,
    pub ledger: SampleLedger,
    /// The run outlived the schedule and kept using its last stage.
    pub beyond_schedule: bool,
    /// Rounds at which the stage changed.
    pub switch_rounds: Vec<u64>,
}

/// All-for-all with a fixed plan:
/// `x_i^{k+1} = x_i^k − η Σ_{j∈S^k} W_ij g_j(x_j^k)`, with raw (unlifted)
/// gradients sent only along the plan's support.
pub fn afa(problems: &[AgentProblem], plan: &MixingPlan, eta: f64, opts: &RunOptions) -> Result<Trajectory> {
    let schedule = AdaptiveSchedule::single(plan.clone(), eta, opts.rounds);
    afa_adaptive(problems, &schedule, opts)
}

/// All-for-all where round `k` uses the step and plan of the schedule stage
/// containing `k`; past the last stage the last stage is kept.
pub fn afa_adaptive(problems: &[AgentProblem], schedule: &AdaptiveSchedule, opts: &RunOptions) -> Result<Trajectory> {
    let n = problems.len();
    let dim = common_dim(problems)?;
    for stage in schedule.stages() {
        check_dim(n, stage.plan.n())?;
    }
    let x0 = opts.start(dim);
    check_dim(dim, x0.len())?;
    let mut x = vec![x0; n];
    let mut sums = opts.report_average.then(|| vec![DVector::zeros(dim); n]);
    let mut ledger = SampleLedger::new(n);
    let mut history = Vec::new();
    let mut tracker = if opts.log_every > 0 && !opts.report_average {
        Some(ErrorTracker::new(&x, problems)?)
    } else {
        None
    };
    let mut record = (opts.log_every > 0).then(|| RunRecord::new(opts.tag.clone(), opts.seed));
    let mut beyond_schedule = false;
    let mut switch_rounds = Vec::new();
    let mut current = 0usize;
    for k in 0..opts.rounds {
        let (idx, beyond) = schedule.stage_at(k);
        if idx != current {
            log::debug!("round {k}: stage {} -> {}", current, idx);
            switch_rounds.push(k);
            current = idx;
        }
        if beyond && !beyond_schedule {
            log::warn!("round {k} is past the schedule; keeping its last stage");
            beyond_schedule = true;
        }
        let stage = &schedule.stages()[idx];
        let (plan, eta) = (&stage.plan, stage.step);
        let w = plan.w();
        if opts.keep_history {
            history.push(x.clone());
        }
        if let Some(s) = sums.as_mut() {
            for (si, xi) in s.iter_mut().zip(&x) {
                *si += xi;
            }
        }
        let active = next_active_set(opts.oracle, n, &mut RngStream::schedule(opts.seed, k));
        ledger.record(&active);
        let grads = opts.exec.map_slice(&active, |&j| {
            let s = problems[j].draw(&mut RngStream::sample(opts.seed, j, k));
            problems[j].gradient_at(&s, &x[j])
        });
        match opts.oracle {
            OracleKind::Asynchronous => {
                let j = active[0];
                for &i in plan.support(j) {
                    x[i].axpy(-(eta * w[(i, j)]), &grads[0], 1.0);
                    if let Some(t) = tracker.as_mut() {
                        t.update(i, &x[i], &problems[i])?;
                    }
                }
            }
            OracleKind::Synchronous => {
                // every agent is active, so `grads[j]` belongs to agent j
                let next = opts.exec.map(n, |i| {
                    let mut xi = x[i].clone();
                    for &j in plan.support(i) {
                        xi.axpy(-(eta * w[(i, j)]), &grads[j], 1.0);
                    }
                    xi
                });
                x = next;
                if let Some(t) = tracker.as_mut() {
                    for i in 0..n {
                        t.update(i, &x[i], &problems[i])?;
                    }
                }
            }
        }
        if let Some(rec) = record.as_mut() {
            let round = k + 1;
            if opts.logs_at(round) {
                let (avg, max) = match (&tracker, &sums) {
                    (Some(t), _) => t.summary(),
                    (None, Some(s)) => {
                        let means: Vec<Point> = s.iter().map(|v| v / round as f64).collect();
                        averaged_error(&means, problems)?
                    }
                    (None, None) => unreachable!("a record always has an error source"),
                };
                rec.push(RecordRow {
                    round,
                    samples_total: ledger.total(),
                    avg_error: avg,
                    max_error: max,
                    eps_stage: stage.eps,
                });
            }
        }
    }
    if opts.keep_history {
        history.push(x.clone());
    }
    let average = sums.map(|s| {
        let k = opts.rounds.max(1) as f64;
        s.into_iter().map(|v| v / k).collect()
    });
    Ok(Trajectory {
        iterates: x,
        average,
        history,
        record,
        ledger,
        beyond_schedule,
        switch_rounds,
    })
}

/// SGD on `f^Λ(y) = f̄(Λy)` with step `η Λᵀ G`, where `G_j` is the raw
/// gradient of `f_j` at `(Λy)_j` for active `j` (zero otherwise), drawn from
/// the same streams as [`afa`].
/// Returns `y^0, …, y^K`; `Λ y^k` reproduces the all-for-all iterates.
pub fn surrogate_sgd(
    problems: &[AgentProblem],
    lambda: &DMatrix<f64>,
    eta: f64,
    opts: &RunOptions,
) -> Result<Vec<Vec<Point>>> {
    let n = problems.len();
    let dim = common_dim(problems)?;
    check_dim(n, lambda.nrows())?;
    let x0 = opts.start(dim);
    check_dim(dim, x0.len())?;
    // Λ is row-stochastic, so equal rows map to themselves
    let mut y = vec![x0; n];
    let mut out = vec![y.clone()];
    for k in 0..opts.rounds {
        let active = next_active_set(opts.oracle, n, &mut RngStream::schedule(opts.seed, k));
        let x = apply_lambda(lambda, &y);
        let mut g = vec![DVector::zeros(dim); n];
        for &j in &active {
            let s = problems[j].draw(&mut RngStream::sample(opts.seed, j, k));
            g[j] = problems[j].gradient_at(&s, &x[j]);
        }
        for (yl, step) in y.iter_mut().zip(apply_lambda_t(lambda, &g)) {
            yl.axpy(-eta, &step, 1.0);
        }
        out.push(y.clone());
    }
    Ok(out)
}

#[derive(Clone, Debug)]
pub struct Baselines {
    /// No collaboration: `Λ = I` at every stage.
    pub local: Trajectory,
    /// One model for everyone: `Λ = (1/N)𝟙𝟙ᵀ` at every stage.
    pub single_model: Trajectory,
}

/// Both reference strategies, run with the same doubling schedule rule as
/// the adaptive all-for-all algorithm.
pub fn baselines(problems: &[AgentProblem], diameter: f64, bound: f64, opts: &RunOptions) -> Result<Baselines> {
    let n = problems.len();
    let local = adaptive_schedule(&BiasMatrix::isolated(n), diameter, bound, opts.rounds)?;
    let single = adaptive_schedule(&BiasMatrix::zeros(n), diameter, bound, opts.rounds)?;
    Ok(Baselines {
        local: afa_adaptive(problems, &local, &opts.clone().tagged("local"))?,
        single_model: afa_adaptive(problems, &single, &opts.clone().tagged("single_model"))?,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::algorithms::{sgd, SgdOptions};
    use crate::exec::Execution;
    use crate::problem::AgentDistribution;

    fn agents(ps: &[f64]) -> Vec<AgentProblem> {
        ps.iter()
            .map(|p| AgentProblem::mean_estimation(AgentDistribution::BernoulliVector { p: vec![*p, 1.0 - p] }).unwrap())
            .collect()
    }

    #[test]
    fn identity_plan_is_independent_sgd() {
        let probs = agents(&[0.1, 0.5, 0.9]);
        let opts = RunOptions::new(4, OracleKind::Synchronous, 50);
        let t = afa(&probs, &MixingPlan::identity(3), 0.1, &opts).unwrap();
        for (i, p) in probs.iter().enumerate() {
            let mut o = SgdOptions::new(4, 50);
            o.agent = i;
            assert_eq!(sgd(p, 0.1, &o).unwrap().last, t.iterates[i]);
        }
    }

    #[test]
    fn uniform_plan_keeps_rows_equal() {
        let probs = agents(&[0.1, 0.5, 0.9, 0.3]);
        for oracle in [OracleKind::Synchronous, OracleKind::Asynchronous] {
            let opts = RunOptions::new(2, oracle, 100).keep_history();
            let t = afa(&probs, &MixingPlan::uniform(4), 0.05, &opts).unwrap();
            for xs in &t.history {
                for x in xs {
                    assert!((x - &xs[0]).amax() <= 1e-12);
                }
            }
        }
    }

    #[test]
    fn modes_agree_bitwise() {
        let probs = agents(&[0.1, 0.5, 0.9, 0.3]);
        let plan = MixingPlan::from_lambda(
            DMatrix::from_fn(4, 4, |i, j| if i == j || j == (i + 1) % 4 { 0.5 } else { 0.0 }),
            1.0,
        )
        .unwrap();
        let run = |exec| {
            let opts = RunOptions::new(6, OracleKind::Synchronous, 40).with_exec(exec);
            afa(&probs, &plan, 0.1, &opts).unwrap()
        };
        let (a, b) = (run(Execution::Sequential), run(Execution::Parallel));
        assert_eq!(a.iterates, b.iterates);
        assert_eq!(a.record, b.record);
    }

    #[test]
    fn factorization_on_small_instance() {
        let probs = agents(&[0.2, 0.4, 0.7]);
        let lambda = DMatrix::from_row_slice(3, 3, &[0.6, 0.4, 0.0, 0.1, 0.8, 0.1, 0.0, 0.5, 0.5]);
        let plan = MixingPlan::from_lambda(lambda.clone(), 1.0).unwrap();
        for oracle in [OracleKind::Synchronous, OracleKind::Asynchronous] {
            let opts = RunOptions::new(8, oracle, 100).keep_history();
            let t = afa(&probs, &plan, 0.05, &opts).unwrap();
            let ys = surrogate_sgd(&probs, &lambda, 0.05, &opts).unwrap();
            for (xs, y) in t.history.iter().zip(&ys) {
                for (a, b) in xs.iter().zip(apply_lambda(&lambda, y)) {
                    assert!((a - b).amax() <= 1e-10);
                }
            }
        }
    }

    #[test]
    fn stage_switches_follow_partial_sums() {
        let probs = agents(&[0.2, 0.25, 0.7]);
        let b = crate::similarity::quadratic_bias(
            &probs.iter().map(|p| p.minimizer().unwrap().clone()).collect::<Vec<_>>(),
        )
        .unwrap();
        let schedule = adaptive_schedule(&b, 1.0, 1.0, 500).unwrap();
        let opts = RunOptions::new(1, OracleKind::Asynchronous, 500);
        let t = afa_adaptive(&probs, &schedule, &opts).unwrap();
        let expected: Vec<u64> = schedule.switch_rounds().into_iter().filter(|r| *r < 500).collect();
        assert_eq!(t.switch_rounds, expected);
        assert_eq!(t.ledger.total(), 500);
    }

    #[test]
    fn running_past_the_schedule_is_flagged() {
        let probs = agents(&[0.2]);
        let schedule = AdaptiveSchedule::single(MixingPlan::identity(1), 0.1, 5);
        let t = afa_adaptive(&probs, &schedule, &RunOptions::new(1, OracleKind::Asynchronous, 10)).unwrap();
        assert!(t.beyond_schedule);
    }
}
