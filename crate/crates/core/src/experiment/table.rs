use std::fmt::Write;

use nalgebra::DVector;

use super::config::ExperimentConfig;
use super::runner::{bias_levels, build_instance};
use crate::error::Result;
use crate::metrics::averaged_error;
use crate::theory::{complexity, BoundKind, BoundParams};

pub const TABLE_HEADER: &str = "bound,agent,eps,value,constant_free,status";

/// Default target accuracy when the config sets no `eps`.
pub const DEFAULT_EPS: f64 = 0.1;

/// Every bound for the first seed and first bias level of `cfg`, one row
/// per bound (per agent for the per-agent bounds). Bounds with a missing
/// constant get an empty value and the reason in `status`.
pub fn bound_table(cfg: &ExperimentConfig) -> Result<String> {
    cfg.check()?;
    let inst = build_instance(cfg, cfg.seeds[0])?;
    let bias = bias_levels(cfg, &inst)?.swap_remove(0).bias;
    let n = cfg.n_agents;
    let curvature = inst.problems[0].loss().curvature(cfg.dim);
    let sigma2 = inst
        .problems
        .iter()
        .map(|p| p.noise().sigma2)
        .try_fold(0.0f64, |a, s| s.map(|v| a.max(v)));
    let (f0, _) = averaged_error(&vec![DVector::zeros(cfg.dim); n], &inst.problems)?;
    let eps = cfg.eps.unwrap_or(DEFAULT_EPS);
    let mut out = String::from(TABLE_HEADER);
    out.push('\n');
    for kind in BoundKind::ALL {
        let lower = matches!(
            kind,
            BoundKind::LowerNonsmooth | BoundKind::LowerStronglyConvex | BoundKind::LowerAfa
        );
        let agents: Vec<Option<usize>> = if kind.per_agent() {
            (0..n).map(Some).collect()
        } else {
            vec![None]
        };
        for agent in agents {
            let params = BoundParams {
                eps,
                // lower bounds take the radius of the ball of diameter D
                d: Some(if lower { cfg.diameter / 2.0 } else { cfg.diameter }),
                b: Some(cfg.grad_bound),
                sigma2,
                mu: curvature.map(|c| c.0),
                l: curvature.map(|c| c.1),
                f0: Some(f0),
                agent,
            };
            let agent = agent.map_or(String::new(), |a| a.to_string());
            let _ = match complexity(kind, params, &bias) {
                Ok(r) => writeln!(out, "{kind},{agent},{eps},{:e},{},ok", r.value, r.constant_free),
                Err(e) => writeln!(out, "{kind},{agent},{eps},,,{}", e.to_string().replace(',', ";")),
            };
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn table_has_a_row_per_bound_and_agent() {
        let cfg = ExperimentConfig {
            n_agents: 3,
            ..ExperimentConfig::default()
        };
        let table = bound_table(&cfg).unwrap();
        let lines: Vec<&str> = table.lines().collect();
        assert_eq!(lines[0], TABLE_HEADER);
        assert_eq!(lines.len(), 1 + 4 * 3 + 4);
        assert!(lines.iter().skip(1).all(|l| l.split(',').count() == 6));
        assert!(lines.iter().any(|l| l.starts_with("afa_upper_1,,0.1,") && l.ends_with(",false,ok")));
    }
}
