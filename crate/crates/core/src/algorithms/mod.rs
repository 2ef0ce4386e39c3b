//! Optimization engines.
//!
//! Every engine draws agent `j`'s round-`k` data item from the stream
//! `(seed, j, k)` and the asynchronous schedule from `(seed, k)`, so engines
//! sharing a seed see identical data.

mod afa;
mod sgd;
mod wga;

pub use afa::{afa, afa_adaptive, baselines, surrogate_sgd, Baselines, Trajectory};
pub use sgd::{sgd, Ball, SgdOptions, SgdOutput};
pub use wga::{naive_parallel, wga, WgaTrajectory};

use nalgebra::DVector;

use crate::error::{Error, Result};
use crate::exec::Execution;
use crate::metrics::{averaged_error, surrogate};
use crate::mixing::MixingPlan;
use crate::oracle::OracleKind;
use crate::problem::{AgentProblem, Point};

#[derive(Clone, Debug)]
pub struct RunOptions {
    pub seed: u64,
    pub oracle: OracleKind,
    pub rounds: u64,
    pub exec: Execution,
    /// Keep every iterate `x^0, …, x^K`.
    pub keep_history: bool,
    /// Record errors every this many rounds and at the last round; 0 disables
    /// the record.
    pub log_every: u64,
    /// Report errors of the running average `(1/k) Σ_{t<k} x^t` instead of
    /// the last iterate.
    pub report_average: bool,
    /// Shared starting point; zero when absent.
    pub x0: Option<Point>,
    pub tag: String,
}

impl RunOptions {
    pub fn new(seed: u64, oracle: OracleKind, rounds: u64) -> Self {
        Self {
            seed,
            oracle,
            rounds,
            exec: Execution::default(),
            keep_history: false,
            log_every: 1,
            report_average: false,
            x0: None,
            tag: String::new(),
        }
    }

    pub fn with_exec(mut self, exec: Execution) -> Self {
        self.exec = exec;
        self
    }

    pub fn keep_history(mut self) -> Self {
        self.keep_history = true;
        self
    }

    pub fn log_every(mut self, every: u64) -> Self {
        self.log_every = every;
        self
    }

    pub fn report_average(mut self, on: bool) -> Self {
        self.report_average = on;
        self
    }

    pub fn with_x0(mut self, x0: Point) -> Self {
        self.x0 = Some(x0);
        self
    }

    pub fn tagged(mut self, tag: impl Into<String>) -> Self {
        self.tag = tag.into();
        self
    }

    fn start(&self, dim: usize) -> Point {
        self.x0.clone().unwrap_or_else(|| DVector::zeros(dim))
    }

    fn logs_at(&self, round: u64) -> bool {
        self.log_every > 0 && (round.is_multiple_of(self.log_every) || round == self.rounds)
    }
}

/// Oracle multiplier: `N` for the asynchronous lift, 1 otherwise.
fn lift_scale(oracle: OracleKind, n: usize) -> f64 {
    match oracle {
        OracleKind::Synchronous => 1.0,
        OracleKind::Asynchronous => n as f64,
    }
}

fn common_dim(problems: &[AgentProblem]) -> Result<usize> {
    let first = problems.first().ok_or_else(|| Error::invalid("problems", "no agents"))?;
    for p in problems {
        crate::error::check_dim(first.dim(), p.dim())?;
    }
    Ok(first.dim())
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub enum StepRule {
    Fixed(f64),
    /// `√(D² / (2KNB² Σ_j λ_j²))`
    WgaSetting1,
    /// `min(1/(2L), ln(F_λ⁰μ²K / (Lσ² Σ_j λ_j²)) / (μK))`
    WgaSetting2,
    /// `√(2N‖x⁰ − x^Λ‖² / (KB² Σ_ij λ_ij²))`
    AfaSetting1,
    /// `min(ln(NF⁰μ²K / (Lσ² Σ_ij λ_ij²)) / (μK), 1/(2L))`
    AfaSetting2,
    /// `min(N^{3/2}D / (σ√(Σ_ij λ_ij²)), N/(2L))`
    AfaConvex,
    /// Projected SGD, bounded gradients: `√(2D² / (B²T))`
    ConvexBounded,
    /// Smooth convex SGD: `min(1/(2L), ‖x⁰ − x^⋆‖ / (σ√T))`
    ConvexSmooth,
    /// Smooth strongly convex SGD: `min(1/(2L), ln(f₀μ²T / (Lσ²)) / (μT))`
    StronglyConvexSmooth,
}

/// Inputs of the step rules. `lambda_sq` is `Σ λ²` over the weights in use,
/// `dist0` the distance from the start to the relevant minimizer and `f0`
/// the initial (weighted) suboptimality.
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct StepConstants {
    pub n: Option<usize>,
    pub rounds: Option<u64>,
    pub d: Option<f64>,
    pub b: Option<f64>,
    pub mu: Option<f64>,
    pub l: Option<f64>,
    pub sigma2: Option<f64>,
    pub f0: Option<f64>,
    pub dist0: Option<f64>,
    pub lambda_sq: Option<f64>,
}

fn need<T: Copy>(v: Option<T>, name: &'static str) -> Result<T> {
    v.ok_or(Error::MissingConstant(name))
}

impl StepRule {
    /// Whether the guarantee behind the rule is about the running average.
    pub fn reports_average(self) -> bool {
        matches!(
            self,
            StepRule::WgaSetting1 | StepRule::AfaSetting1 | StepRule::ConvexBounded | StepRule::ConvexSmooth
        )
    }

    pub fn resolve(self, c: &StepConstants) -> Result<f64> {
        let eta = match self {
            StepRule::Fixed(eta) => eta,
            StepRule::WgaSetting1 => {
                let (d, b) = (need(c.d, "D")?, need(c.b, "B")?);
                let k = need(c.rounds, "K")? as f64;
                let n = need(c.n, "N")? as f64;
                (d * d / (2.0 * k * n * b * b * need(c.lambda_sq, "lambda_sq")?)).sqrt()
            }
            StepRule::WgaSetting2 => {
                let (mu, l, s2) = (need(c.mu, "mu")?, need(c.l, "L")?, need(c.sigma2, "sigma2")?);
                let k = need(c.rounds, "K")? as f64;
                let arg = need(c.f0, "F0")? * mu * mu * k / (l * s2 * need(c.lambda_sq, "lambda_sq")?);
                (1.0 / (2.0 * l)).min(arg.ln() / (mu * k))
            }
            StepRule::AfaSetting1 => {
                let b = need(c.b, "B")?;
                let k = need(c.rounds, "K")? as f64;
                let n = need(c.n, "N")? as f64;
                let r = need(c.dist0, "dist0")?;
                (2.0 * n * r * r / (k * b * b * need(c.lambda_sq, "lambda_sq")?)).sqrt()
            }
            StepRule::AfaSetting2 => {
                let (mu, l, s2) = (need(c.mu, "mu")?, need(c.l, "L")?, need(c.sigma2, "sigma2")?);
                let k = need(c.rounds, "K")? as f64;
                let n = need(c.n, "N")? as f64;
                let arg = n * need(c.f0, "F0")? * mu * mu * k / (l * s2 * need(c.lambda_sq, "lambda_sq")?);
                (arg.ln() / (mu * k)).min(1.0 / (2.0 * l))
            }
            StepRule::AfaConvex => {
                let (d, l, s2) = (need(c.d, "D")?, need(c.l, "L")?, need(c.sigma2, "sigma2")?);
                let n = need(c.n, "N")? as f64;
                let noise = n.powf(1.5) * d / (s2.sqrt() * need(c.lambda_sq, "lambda_sq")?.sqrt());
                noise.min(n / (2.0 * l))
            }
            StepRule::ConvexBounded => {
                let (d, b) = (need(c.d, "D")?, need(c.b, "B")?);
                (2.0 * d * d / (b * b * need(c.rounds, "T")? as f64)).sqrt()
            }
            StepRule::ConvexSmooth => {
                let (l, s2) = (need(c.l, "L")?, need(c.sigma2, "sigma2")?);
                let t = need(c.rounds, "T")? as f64;
                (1.0 / (2.0 * l)).min(need(c.dist0, "dist0")? / (s2.sqrt() * t.sqrt()))
            }
            StepRule::StronglyConvexSmooth => {
                let (mu, l, s2) = (need(c.mu, "mu")?, need(c.l, "L")?, need(c.sigma2, "sigma2")?);
                let t = need(c.rounds, "T")? as f64;
                let arg = need(c.f0, "F0")? * mu * mu * t / (l * s2);
                (1.0 / (2.0 * l)).min(arg.ln() / (mu * t))
            }
        };
        if eta > 0.0 && eta.is_finite() {
            Ok(eta)
        } else {
            Err(Error::invalid("step", format!("{self:?} yields η = {eta}")))
        }
    }
}

impl StepConstants {
    /// `μ`, `L`, `σ²` and `B²` shared by all agents (worst case over agents),
    /// when known.
    pub fn from_problems(problems: &[AgentProblem]) -> Self {
        let dim = problems.first().map_or(1, |p| p.dim());
        let curv: Option<Vec<(f64, f64)>> = problems.iter().map(|p| p.loss().curvature(dim)).collect();
        let (mu, l) = match curv {
            Some(c) if !c.is_empty() => (
                Some(c.iter().map(|v| v.0).fold(f64::INFINITY, f64::min)),
                Some(c.iter().map(|v| v.1).fold(0.0, f64::max)),
            ),
            _ => (None, problems.iter().map(|p| p.smoothness()).try_fold(0.0f64, |a, s| s.map(|v| a.max(v)))),
        };
        let worst = |f: fn(&AgentProblem) -> Option<f64>| {
            problems.iter().map(f).try_fold(0.0f64, |a, s| s.map(|v| a.max(v)))
        };
        Self {
            n: Some(problems.len()),
            mu,
            l,
            sigma2: worst(|p| p.noise().sigma2),
            b: worst(|p| p.noise().b2).map(f64::sqrt),
            ..Self::default()
        }
    }

    /// Constants for the all-for-all rules: `F⁰`, `‖x⁰ − x^Λ‖` and
    /// `Σ_ij λ_ij²` computed exactly from the surrogate.
    pub fn for_afa(problems: &[AgentProblem], plan: &MixingPlan, x0: &Point, rounds: u64) -> Result<Self> {
        let start = vec![x0.clone(); problems.len()];
        let (f0, _) = averaged_error(&start, problems)?;
        let sol = surrogate(problems, plan.lambda())?;
        let dist0 = start
            .iter()
            .zip(&sol.x_lambda)
            .map(|(a, b)| (a - b).norm_squared())
            .sum::<f64>()
            .sqrt();
        Ok(Self {
            rounds: Some(rounds),
            f0: Some(f0),
            dist0: Some(dist0),
            lambda_sq: Some(plan.lambda_sq_sum()),
            ..Self::from_problems(problems)
        })
    }

    /// Constants for the all-for-one rules with weights `lambda`:
    /// `F_λ⁰ = Σ_j λ_j (f_j(x⁰) − f_j(x_j^⋆))` and `Σ_j λ_j²`.
    pub fn for_wga(problems: &[AgentProblem], lambda: &DVector<f64>, x0: &Point, rounds: u64) -> Result<Self> {
        let mut f0 = 0.0;
        for (j, p) in problems.iter().enumerate() {
            if lambda[j] != 0.0 {
                f0 += lambda[j] * p.excess(x0)?;
            }
        }
        Ok(Self {
            rounds: Some(rounds),
            f0: Some(f0),
            lambda_sq: Some(lambda.norm_squared()),
            ..Self::from_problems(problems)
        })
    }

    pub fn with_d(mut self, d: f64) -> Self {
        self.d = Some(d);
        self
    }

    pub fn with_b(mut self, b: f64) -> Self {
        self.b = Some(b);
        self
    }

    pub fn with_rounds(mut self, rounds: u64) -> Self {
        self.rounds = Some(rounds);
        self
    }
}
