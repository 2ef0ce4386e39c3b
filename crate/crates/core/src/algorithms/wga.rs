use nalgebra::{DMatrix, DVector};

use super::{common_dim, lift_scale, RunOptions};
use crate::error::{check_dim, Error, Result};
use crate::metrics::{ErrorTracker, RecordRow, RunRecord};
use crate::mixing::build_mixing;
use crate::oracle::{next_active_set, SampleLedger};
use crate::problem::{AgentProblem, Point};
use crate::rng::RngStream;
use crate::similarity::BiasMatrix;

#[derive(Clone, Debug)]
pub struct WgaTrajectory {
    pub last: Point,
    /// `(1/K) Σ_{k<K} x^k`
    pub average: Point,
    pub history: Vec<Point>,
    /// Error of the target agent (last iterate, or running average when
    /// requested).
    pub record: Option<RunRecord>,
    pub ledger: SampleLedger,
}

/// Weighted gradient averaging on a shared iterate:
/// `x^{k+1} = x^k − η Σ_j λ_j G^k(x^k)_j`.
pub fn wga(
    problems: &[AgentProblem],
    target: usize,
    lambda: &DVector<f64>,
    eta: f64,
    opts: &RunOptions,
) -> Result<WgaTrajectory> {
    let n = problems.len();
    let dim = common_dim(problems)?;
    check_dim(n, lambda.len())?;
    if target >= n {
        return Err(Error::invalid("target", format!("agent {target} out of range")));
    }
    if lambda.iter().any(|v| !(*v >= 0.0)) || (lambda.sum() - 1.0).abs() > 1e-12 {
        return Err(Error::invalid("lambda", "not a stochastic vector"));
    }
    let scale = lift_scale(opts.oracle, n);
    let mut x = opts.start(dim);
    check_dim(dim, x.len())?;
    let mut sum = DVector::zeros(dim);
    let mut ledger = SampleLedger::new(n);
    let mut history = Vec::new();
    let mut record = (opts.log_every > 0).then(|| RunRecord::new(opts.tag.clone(), opts.seed));
    for k in 0..opts.rounds {
        if opts.keep_history {
            history.push(x.clone());
        }
        sum += &x;
        let active = next_active_set(opts.oracle, n, &mut RngStream::schedule(opts.seed, k));
        ledger.record(&active);
        let contributing: Vec<usize> = active.into_iter().filter(|&j| lambda[j] != 0.0).collect();
        let grads = opts.exec.map_slice(&contributing, |&j| {
            let mut stream = RngStream::sample(opts.seed, j, k);
            let s = problems[j].draw(&mut stream);
            problems[j].gradient_at(&s, &x)
        });
        for (&j, g) in contributing.iter().zip(&grads) {
            x.axpy(-(eta * lambda[j] * scale), g, 1.0);
        }
        if let Some(rec) = record.as_mut() {
            let round = k + 1;
            if opts.logs_at(round) {
                let at = if opts.report_average {
                    &sum / round as f64
                } else {
                    x.clone()
                };
                let gap = problems[target].excess(&at)?;
                rec.push(RecordRow {
                    round,
                    samples_total: ledger.total(),
                    avg_error: gap,
                    max_error: gap,
                    eps_stage: f64::NAN,
                });
            }
        }
    }
    if opts.keep_history {
        history.push(x.clone());
    }
    let average = if opts.rounds > 0 {
        sum / opts.rounds as f64
    } else {
        x.clone()
    };
    Ok(WgaTrajectory {
        last: x,
        average,
        history,
        record,
        ledger,
    })
}

/// `N` simultaneous weighted averagings sharing samples: the item agent `j`
/// draws at round `k` yields a gradient at every `x_i` with `2b_ij ≤ ε`,
/// weighted by the mixing row `λ_i`. The record carries the mean and the
/// worst per-agent error.
pub fn naive_parallel(
    problems: &[AgentProblem],
    b: &BiasMatrix,
    eps: f64,
    eta: f64,
    opts: &RunOptions,
) -> Result<super::Trajectory> {
    let n = problems.len();
    let dim = common_dim(problems)?;
    check_dim(n, b.n())?;
    let plan = build_mixing(b, eps)?;
    let lambda: &DMatrix<f64> = plan.lambda();
    let scale = lift_scale(opts.oracle, n);
    let x0 = opts.start(dim);
    check_dim(dim, x0.len())?;
    let mut x = vec![x0; n];
    let mut ledger = SampleLedger::new(n);
    let mut history = Vec::new();
    let mut tracker = if opts.log_every > 0 {
        Some(ErrorTracker::new(&x, problems)?)
    } else {
        None
    };
    let mut record = tracker.as_ref().map(|_| RunRecord::new(opts.tag.clone(), opts.seed));
    for k in 0..opts.rounds {
        if opts.keep_history {
            history.push(x.clone());
        }
        let active = next_active_set(opts.oracle, n, &mut RngStream::schedule(opts.seed, k));
        ledger.record(&active);
        let samples: Vec<_> = active
            .iter()
            .map(|&j| problems[j].draw(&mut RngStream::sample(opts.seed, j, k)))
            .collect();
        let next = opts.exec.map(n, |i| {
            let mut xi = x[i].clone();
            let mut moved = false;
            for (&j, s) in active.iter().zip(&samples) {
                let w = lambda[(i, j)];
                if w != 0.0 {
                    let g = problems[j].gradient_at(s, &x[i]);
                    xi.axpy(-(eta * w * scale), &g, 1.0);
                    moved = true;
                }
            }
            moved.then_some(xi)
        });
        for (i, xi) in next.into_iter().enumerate() {
            if let Some(xi) = xi {
                x[i] = xi;
                if let Some(t) = tracker.as_mut() {
                    t.update(i, &x[i], &problems[i])?;
                }
            }
        }
        if let (Some(t), Some(rec)) = (tracker.as_ref(), record.as_mut()) {
            let round = k + 1;
            if opts.logs_at(round) {
                let (avg, max) = t.summary();
                rec.push(RecordRow {
                    round,
                    samples_total: ledger.total(),
                    avg_error: avg,
                    max_error: max,
                    eps_stage: eps,
                });
            }
        }
    }
    if opts.keep_history {
        history.push(x.clone());
    }
    Ok(super::Trajectory {
        iterates: x,
        average: None,
        history,
        record,
        ledger,
        beyond_schedule: false,
        switch_rounds: Vec::new(),
    })
}
