//! Mixing plans `Λ`, `W = ΛΛᵀ` and the doubling schedule of plans.

use std::io::Write;

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::similarity::{neighborhood_count_scaled, BiasMatrix};

/// Row sums of `Λ` must match 1 to this precision.
pub const ROW_SUM_TOL: f64 = 1e-12;

const POWER_ITERATIONS: usize = 10_000;
const POWER_TOL: f64 = 1e-13;

#[derive(Clone, Debug, PartialEq)]
pub struct MixingPlan {
    lambda: DMatrix<f64>,
    w: DMatrix<f64>,
    eps: f64,
    support: Vec<Vec<usize>>,
    spectral_radius: f64,
}

impl MixingPlan {
    /// Plan from an explicit row-stochastic `Λ`.
    pub fn from_lambda(lambda: DMatrix<f64>, eps: f64) -> Result<Self> {
        let n = lambda.nrows();
        if lambda.ncols() != n || n == 0 {
            return Err(Error::invalid("lambda", "must be a non-empty square matrix"));
        }
        for i in 0..n {
            let row = lambda.row(i);
            if row.iter().any(|v| !(*v >= 0.0)) {
                return Err(Error::invalid("lambda", format!("row {i} has a negative entry")));
            }
            if (row.sum() - 1.0).abs() > ROW_SUM_TOL {
                return Err(Error::invalid("lambda", format!("row {i} sums to {}", row.sum())));
            }
        }
        let w = &lambda * lambda.transpose();
        let support = (0..n)
            .map(|i| (0..n).filter(|&j| w[(i, j)] > 0.0).collect())
            .collect();
        let spectral_radius = power_iteration(&w);
        if spectral_radius > 1.0 + 1e-9 {
            log::info!("mixing plan at eps={eps}: spectral radius of W is {spectral_radius} > 1");
        } else {
            log::debug!("mixing plan at eps={eps}: spectral radius of W is {spectral_radius}");
        }
        Ok(Self {
            lambda,
            w,
            eps,
            support,
            spectral_radius,
        })
    }

    pub fn identity(n: usize) -> Self {
        Self::from_lambda(DMatrix::identity(n, n), 0.0).expect("identity is stochastic")
    }

    pub fn uniform(n: usize) -> Self {
        Self::from_lambda(DMatrix::from_element(n, n, 1.0 / n as f64), f64::INFINITY)
            .expect("uniform matrix is stochastic")
    }

    pub fn n(&self) -> usize {
        self.lambda.nrows()
    }

    pub fn lambda(&self) -> &DMatrix<f64> {
        &self.lambda
    }

    pub fn w(&self) -> &DMatrix<f64> {
        &self.w
    }

    pub fn eps(&self) -> f64 {
        self.eps
    }

    /// `{j : W_ij > 0}`, increasing. `W` is symmetric, so this is also the set
    /// of agents that receive agent `i`'s gradient.
    pub fn support(&self, i: usize) -> &[usize] {
        &self.support[i]
    }

    /// Largest eigenvalue of `W`, measured by power iteration.
    pub fn spectral_radius(&self) -> f64 {
        self.spectral_radius
    }

    pub fn radius_exceeds_one(&self) -> bool {
        self.spectral_radius > 1.0 + 1e-9
    }

    /// `Σ_ij λ_ij²`
    pub fn lambda_sq_sum(&self) -> f64 {
        self.lambda.norm_squared()
    }

    /// `Λ` block then `W` block, each headed by `<name>,n=<N>`.
    pub fn write_csv<W: Write>(&self, w: W) -> Result<()> {
        let mut out = csv::WriterBuilder::new().flexible(true).from_writer(w);
        for (name, m) in [("lambda", &self.lambda), ("w", &self.w)] {
            out.write_record([name.to_string(), format!("n={}", self.n())])?;
            for i in 0..self.n() {
                out.write_record(m.row(i).iter().map(|v| v.to_string()))?;
            }
        }
        out.flush()?;
        Ok(())
    }
}

fn power_iteration(w: &DMatrix<f64>) -> f64 {
    let n = w.nrows();
    // a non-uniform start avoids orthogonality to the top eigenvector
    let mut v = DVector::from_fn(n, |i, _| 1.0 + (i as f64 + 1.0).sqrt() * 1e-3);
    v.normalize_mut();
    let mut estimate = 0.0;
    for _ in 0..POWER_ITERATIONS {
        let next = w * &v;
        let norm = next.norm();
        if norm == 0.0 {
            return 0.0;
        }
        let rayleigh = v.dot(&next);
        v = next / norm;
        if (rayleigh - estimate).abs() <= POWER_TOL * rayleigh.abs().max(1.0) {
            return rayleigh;
        }
        estimate = rayleigh;
    }
    estimate
}

/// `λ_ij = 1{2b_ij ≤ ε} / N_i^ε(2b)`, `W = ΛΛᵀ`.
pub fn build_mixing(b: &BiasMatrix, eps: f64) -> Result<MixingPlan> {
    if !(eps > 0.0) {
        return Err(Error::invalid("eps", "must be > 0"));
    }
    let n = b.n();
    let mut lambda = DMatrix::zeros(n, n);
    for i in 0..n {
        let count = neighborhood_count_scaled(b, i, eps, 2.0) as f64;
        for j in 0..n {
            if 2.0 * b.get(i, j) <= eps {
                lambda[(i, j)] = 1.0 / count;
            }
        }
    }
    MixingPlan::from_lambda(lambda, eps)
}

/// `Σ_i 1 / N_i^ε(2b)`
pub fn inverse_cluster_sum(b: &BiasMatrix, eps: f64) -> f64 {
    (0..b.n())
        .map(|i| 1.0 / neighborhood_count_scaled(b, i, eps, 2.0) as f64)
        .sum()
}

#[derive(Clone, Debug, PartialEq)]
pub struct Stage {
    pub p: u32,
    pub eps: f64,
    /// First round of the stage.
    pub start: u64,
    /// `K_ε` as given by the formula; the last stage may be cut by the horizon.
    pub rounds: u64,
    pub step: f64,
    pub plan: MixingPlan,
}

impl Stage {
    pub fn end(&self) -> u64 {
        self.start + self.rounds
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct AdaptiveSchedule {
    stages: Vec<Stage>,
    /// The horizon is shorter than the first stage.
    pub short_horizon: bool,
}

impl AdaptiveSchedule {
    pub fn single(plan: MixingPlan, step: f64, rounds: u64) -> Self {
        Self {
            stages: vec![Stage {
                p: 0,
                eps: plan.eps(),
                start: 0,
                rounds,
                step,
                plan,
            }],
            short_horizon: false,
        }
    }

    pub fn stages(&self) -> &[Stage] {
        &self.stages
    }

    /// Stage active at `round`, and whether `round` lies past the last stage.
    pub fn stage_at(&self, round: u64) -> (usize, bool) {
        let idx = self.stages.partition_point(|s| s.end() <= round);
        if idx >= self.stages.len() {
            (self.stages.len() - 1, true)
        } else {
            (idx, false)
        }
    }

    /// Rounds at which a new stage starts, excluding round 0.
    pub fn switch_rounds(&self) -> Vec<u64> {
        self.stages.iter().skip(1).map(|s| s.start).collect()
    }
}

/// Upper limit on the doubling index; `2^-60` is far below any reachable error.
const MAX_STAGE: u32 = 60;

/// Stages `p = 0, 1, …` with `ε_p = 2^-p`,
/// `K_ε = ⌈4D²B²/ε² · Σ_i 1/N_i^ε(2b)⌉` and
/// `η(ε) = 2ND² / (K_ε B² Σ_i 1/N_i^ε(2b))`, until the stages cover
/// `horizon` rounds.
pub fn adaptive_schedule(b: &BiasMatrix, diameter: f64, bound: f64, horizon: u64) -> Result<AdaptiveSchedule> {
    if !(diameter > 0.0) {
        return Err(Error::invalid("D", "must be > 0"));
    }
    if !(bound > 0.0) {
        return Err(Error::invalid("B", "must be > 0"));
    }
    let n = b.n() as f64;
    let (d2, b2) = (diameter * diameter, bound * bound);
    let mut stages = Vec::new();
    let mut start = 0u64;
    for p in 0..=MAX_STAGE {
        let eps = 0.5f64.powi(p as i32);
        let inv = inverse_cluster_sum(b, eps);
        let rounds = (4.0 * d2 * b2 / (eps * eps) * inv).ceil().max(1.0) as u64;
        let step = 2.0 * n * d2 / (rounds as f64 * b2 * inv);
        stages.push(Stage {
            p,
            eps,
            start,
            rounds,
            step,
            plan: build_mixing(b, eps)?,
        });
        start = start.saturating_add(rounds);
        if start >= horizon {
            break;
        }
    }
    let short_horizon = stages[0].rounds > horizon;
    if short_horizon {
        log::warn!(
            "horizon of {horizon} rounds is shorter than the first stage ({} rounds)",
            stages[0].rounds
        );
    }
    Ok(AdaptiveSchedule { stages, short_horizon })
}
