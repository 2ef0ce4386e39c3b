use std::fmt;

use super::config::ExperimentConfig;
use super::runner::{bias_levels, build_instance, BiasLevel, SeedInstance};
use crate::algorithms::{afa, RunOptions};
use crate::error::{Error, Result};
use crate::exec::Execution;
use crate::mixing::{adaptive_schedule, build_mixing, MixingPlan};
use crate::oracle::OracleKind;
use crate::rng::{Domain, RngStream};
use crate::similarity::{distance, neighborhood_count_scaled, validate_assumptions_with, DistanceFamily};

pub const STRUCTURE_TOL: f64 = 1e-12;
pub const ASSUMPTION_TOL: f64 = 1e-9;
pub const TRIPLES: usize = 100;

#[derive(Clone, Debug, PartialEq)]
pub struct Check {
    pub name: String,
    pub passed: bool,
    /// Reported for information only; never fails the suite.
    pub advisory: bool,
    pub detail: String,
}

impl fmt::Display for Check {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let status = match (self.advisory, self.passed) {
            (true, _) => "INFO",
            (false, true) => "PASS",
            (false, false) => "FAIL",
        };
        write!(f, "{status} {} {}", self.name, self.detail)
    }
}

fn gate(name: impl Into<String>, worst: f64, tol: f64) -> Check {
    Check {
        name: name.into(),
        passed: worst <= tol,
        advisory: false,
        detail: format!("worst={worst:e} tol={tol:e}"),
    }
}

pub fn all_green(checks: &[Check]) -> bool {
    checks.iter().all(|c| c.advisory || c.passed)
}

/// Largest `|Σ_j λ_ij − 1|`.
pub fn row_sum_residual(plan: &MixingPlan) -> f64 {
    plan.lambda()
        .row_iter()
        .map(|r| (r.sum() - 1.0).abs())
        .fold(0.0, f64::max)
}

/// Largest `|W − ΛΛᵀ|` entry, with the product formed entry by entry.
pub fn product_residual(plan: &MixingPlan) -> f64 {
    let l = plan.lambda();
    let n = l.nrows();
    let mut worst = 0.0f64;
    for i in 0..n {
        for j in 0..n {
            let v: f64 = (0..n).map(|k| l[(i, k)] * l[(j, k)]).sum();
            worst = worst.max((plan.w()[(i, j)] - v).abs());
        }
    }
    worst
}

/// Agents whose neighbourhood count, mixing row support and brute-force
/// count `#{j : 2b_ij ≤ ε}` disagree.
pub fn count_mismatches(level: &BiasLevel, plan: &MixingPlan) -> usize {
    let b = &level.bias;
    (0..b.n())
        .filter(|&i| {
            let brute = (0..b.n()).filter(|&j| 2.0 * b.get(i, j) <= plan.eps()).count();
            let row = plan.lambda().row(i).iter().filter(|v| **v != 0.0).count();
            brute != neighborhood_count_scaled(b, i, plan.eps(), 2.0) || brute != row
        })
        .count()
}

/// Worst `d(a, c) − d(a, b) − d(b, c)` over `TRIPLES` random agent triples,
/// or `None` when the family is not computable for these agents.
pub fn triangle_residual(inst: &SeedInstance, family: DistanceFamily) -> Result<Option<f64>> {
    let n = inst.problems.len();
    let mut s = RngStream::domain(inst.seed, Domain::Aux);
    let mut worst = f64::NEG_INFINITY;
    for _ in 0..TRIPLES {
        let (a, b, c) = (s.index(n), s.index(n), s.index(n));
        let d = |i: usize, j: usize| distance(family, inst.problems[i].dist(), inst.problems[j].dist());
        let v = match (d(a, c), d(a, b), d(b, c)) {
            (Ok(ac), Ok(ab), Ok(bc)) => ac - ab - bc,
            (Err(Error::Unsupported(_) | Error::NumericOnly(_)), _, _) => return Ok(None),
            (Err(e), _, _) | (_, Err(e), _) | (_, _, Err(e)) => return Err(e),
        };
        worst = worst.max(v);
    }
    Ok(Some(worst))
}

/// Structural and assumption checks on the first seed of `cfg`.
pub fn validate_config(cfg: &ExperimentConfig, exec: Execution) -> Result<Vec<Check>> {
    cfg.check()?;
    let inst = build_instance(cfg, cfg.seeds[0])?;
    let levels = bias_levels(cfg, &inst)?;
    let mut checks = Vec::new();
    for level in &levels {
        let suffix = level.noise.map_or(String::new(), |a| format!("[noise={a}]"));
        let mut plans: Vec<MixingPlan> = adaptive_schedule(&level.bias, cfg.diameter, cfg.grad_bound, cfg.rounds())?
            .stages()
            .iter()
            .map(|s| s.plan.clone())
            .collect();
        if let Some(eps) = cfg.eps {
            plans.push(build_mixing(&level.bias, eps)?);
        }
        let fold = |f: &dyn Fn(&MixingPlan) -> f64| plans.iter().map(f).fold(0.0, f64::max);
        checks.push(gate(format!("lambda_row_sums{suffix}"), fold(&row_sum_residual), STRUCTURE_TOL));
        checks.push(gate(format!("w_equals_lambda_lambda_t{suffix}"), fold(&product_residual), STRUCTURE_TOL));
        let mismatched: usize = plans.iter().map(|p| count_mismatches(level, p)).sum();
        checks.push(Check {
            name: format!("neighborhood_counts{suffix}"),
            passed: mismatched == 0,
            advisory: false,
            detail: format!("plans={} mismatched_rows={mismatched}", plans.len()),
        });
        let radius = fold(&|p: &MixingPlan| p.spectral_radius());
        checks.push(Check {
            name: format!("spectral_radius{suffix}"),
            passed: radius <= 1.0 + STRUCTURE_TOL,
            advisory: true,
            detail: format!("max={radius:.6}"),
        });
        let report = validate_assumptions_with(exec, &inst.problems, &level.bias, &[], &[])?;
        if report.function_gap_skipped {
            checks.push(Check {
                name: format!("bias_bound{suffix}"),
                passed: true,
                advisory: true,
                detail: "skipped: no closed-form minimizer".into(),
            });
        } else {
            let mut c = gate(format!("bias_bound{suffix}"), report.worst(), ASSUMPTION_TOL);
            // perturbed estimates are expected to miss the bound
            c.advisory = level.noise.is_some_and(|a| a > 0.0);
            checks.push(c);
        }
    }
    for (name, family) in [
        ("mean_distance", DistanceFamily::MeanDistance),
        ("wasserstein_1", DistanceFamily::Wasserstein1),
        ("total_variation", DistanceFamily::TotalVariation),
    ] {
        match triangle_residual(&inst, family)? {
            Some(w) => checks.push(gate(format!("triangle_{name}"), w, STRUCTURE_TOL)),
            None => checks.push(Check {
                name: format!("triangle_{name}"),
                passed: true,
                advisory: true,
                detail: "not computable for these agents".into(),
            }),
        }
    }
    let rounds = cfg.rounds().min(10 * cfg.n_agents as u64);
    let probe = afa(
        &inst.problems,
        &MixingPlan::uniform(cfg.n_agents),
        1e-3,
        &RunOptions::new(inst.seed, cfg.oracle, rounds).with_exec(exec).log_every(0),
    )?;
    let per_round = match cfg.oracle {
        OracleKind::Asynchronous => 1,
        OracleKind::Synchronous => cfg.n_agents as u64,
    };
    checks.push(Check {
        name: "sample_ledger".into(),
        passed: probe.ledger.is_consistent() && probe.ledger.total() == rounds * per_round,
        advisory: false,
        detail: format!("rounds={rounds} samples={}", probe.ledger.total()),
    });
    Ok(checks)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::experiment::config::BiasSource;

    #[test]
    fn default_instance_is_green() {
        let cfg = ExperimentConfig {
            n_agents: 12,
            eps: Some(0.05),
            ..ExperimentConfig::default()
        };
        let checks = validate_config(&cfg, Execution::Sequential).unwrap();
        for c in &checks {
            assert!(c.advisory || c.passed, "{c}");
        }
        assert!(checks.iter().any(|c| c.name == "triangle_wasserstein_1" && !c.advisory));
    }

    #[test]
    fn underestimated_bias_fails_its_bound() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("b.csv");
        let n = 5;
        let b = crate::similarity::BiasMatrix::zeros(n);
        b.write_file(&path).unwrap();
        let cfg = ExperimentConfig {
            n_agents: n,
            bias: BiasSource::File(path),
            ..ExperimentConfig::default()
        };
        let checks = validate_config(&cfg, Execution::Sequential).unwrap();
        let bound = checks.iter().find(|c| c.name == "bias_bound").unwrap();
        assert!(!bound.passed);
        assert!(!all_green(&checks));
    }
}
