//! Sample-complexity calculators and hard-instance generators.
//!
//! Lower bounds are evaluated with their unspecified constant set to 1 and
//! flagged `constant_free`.

use std::fmt;
use std::str::FromStr;

use crate::error::{Error, Result};
use crate::problem::{AgentDistribution, AgentProblem, LossKind};
use crate::rng::RngStream;
use crate::similarity::{neighborhood_count_scaled, BiasFlavor, BiasMatrix};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum BoundKind {
    WgaUpper1,
    WgaUpper2,
    AfaUpper1,
    AfaUpper2,
    AfaConvexUpper,
    LowerNonsmooth,
    LowerStronglyConvex,
    LowerAfa,
}

impl BoundKind {
    pub const ALL: [BoundKind; 8] = [
        BoundKind::WgaUpper1,
        BoundKind::WgaUpper2,
        BoundKind::AfaUpper1,
        BoundKind::AfaUpper2,
        BoundKind::AfaConvexUpper,
        BoundKind::LowerNonsmooth,
        BoundKind::LowerStronglyConvex,
        BoundKind::LowerAfa,
    ];

    pub fn name(self) -> &'static str {
        match self {
            BoundKind::WgaUpper1 => "wga_upper_1",
            BoundKind::WgaUpper2 => "wga_upper_2",
            BoundKind::AfaUpper1 => "afa_upper_1",
            BoundKind::AfaUpper2 => "afa_upper_2",
            BoundKind::AfaConvexUpper => "afa_convex_upper",
            BoundKind::LowerNonsmooth => "lower_nonsmooth",
            BoundKind::LowerStronglyConvex => "lower_strongly_convex",
            BoundKind::LowerAfa => "lower_afa",
        }
    }

    /// Per-agent bounds need an agent index.
    pub fn per_agent(self) -> bool {
        matches!(
            self,
            BoundKind::WgaUpper1 | BoundKind::WgaUpper2 | BoundKind::LowerNonsmooth | BoundKind::LowerStronglyConvex
        )
    }
}

impl fmt::Display for BoundKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for BoundKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        BoundKind::ALL
            .into_iter()
            .find(|k| k.name() == s)
            .ok_or_else(|| Error::invalid("bound", format!("unknown bound {s:?}")))
    }
}

/// Formula inputs. `d` is the diameter `D` for upper bounds and the radius
/// `r` for lower bounds; `b` is the gradient bound `B`.
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct BoundParams {
    pub eps: f64,
    pub d: Option<f64>,
    pub b: Option<f64>,
    pub sigma2: Option<f64>,
    pub mu: Option<f64>,
    pub l: Option<f64>,
    pub f0: Option<f64>,
    pub agent: Option<usize>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct ComplexityReport {
    pub kind: BoundKind,
    pub value: f64,
    pub constant_free: bool,
    pub params: BoundParams,
}

fn need(v: Option<f64>, name: &'static str) -> Result<f64> {
    v.ok_or(Error::MissingConstant(name))
}

/// Evaluate the bound `kind` for the bias matrix `bias`.
pub fn complexity(kind: BoundKind, params: BoundParams, bias: &BiasMatrix) -> Result<ComplexityReport> {
    let eps = params.eps;
    if !(eps > 0.0) {
        return Err(Error::invalid("eps", "must be > 0"));
    }
    let n = bias.n() as f64;
    let count = |i: usize, scale: f64| neighborhood_count_scaled(bias, i, eps, scale) as f64;
    let inv_sum = |scale: f64| (0..bias.n()).map(|i| 1.0 / count(i, scale)).sum::<f64>();
    let agent = || -> Result<usize> {
        let i = params.agent.ok_or(Error::MissingConstant("agent"))?;
        if i >= bias.n() {
            return Err(Error::invalid("agent", format!("{i} out of range")));
        }
        Ok(i)
    };
    let kappa = || -> Result<f64> { Ok(need(params.l, "L")? / need(params.mu, "mu")?) };
    let value = match kind {
        BoundKind::WgaUpper1 => {
            let (d, b) = (need(params.d, "D")?, need(params.b, "B")?);
            4.0 * d * d * b * b / (eps * eps) * n / count(agent()?, 2.0)
        }
        BoundKind::WgaUpper2 => {
            let s2 = need(params.sigma2, "sigma2")?;
            kappa()? * s2 / (need(params.mu, "mu")? * eps) * n / count(agent()?, 2.0)
        }
        BoundKind::AfaUpper1 => {
            let (d, b) = (need(params.d, "D")?, need(params.b, "B")?);
            4.0 * d * d * b * b / (eps * eps) * inv_sum(2.0)
        }
        BoundKind::AfaUpper2 => {
            let (s2, mu, k) = (need(params.sigma2, "sigma2")?, need(params.mu, "mu")?, kappa()?);
            let log = (need(params.f0, "F0")? / eps).ln();
            2.0 * (k * s2 / (eps * mu) * inv_sum(2.0)).max(n * k) * log
        }
        BoundKind::AfaConvexUpper => {
            let (d, s2, l) = (need(params.d, "D")?, need(params.sigma2, "sigma2")?, need(params.l, "L")?);
            (8.0 * d * d * s2 / (eps * eps) * inv_sum(2.0)).max(4.0 * n * l * d * d / eps)
        }
        BoundKind::LowerNonsmooth => {
            let (r, b) = (need(params.d, "r")?, need(params.b, "B")?);
            r * r * b * b * n / (eps * eps * count(agent()?, 0.25))
        }
        BoundKind::LowerStronglyConvex => {
            let (r, s2) = (need(params.d, "r")?, need(params.sigma2, "sigma2")?);
            r * r * s2 * n / (eps * count(agent()?, 0.25))
        }
        BoundKind::LowerAfa => {
            let (r, b) = (need(params.d, "r")?, need(params.b, "B")?);
            r * r * b * b / (n * n * eps * eps) * inv_sum(1.0 / (4.0 * n))
        }
    };
    if !(value > 0.0 && value.is_finite()) {
        return Err(Error::invalid("bound", format!("{kind} evaluates to {value}")));
    }
    Ok(ComplexityReport {
        kind,
        value,
        constant_free: matches!(
            kind,
            BoundKind::WgaUpper2 | BoundKind::LowerNonsmooth | BoundKind::LowerStronglyConvex | BoundKind::LowerAfa
        ),
        params,
    })
}

pub type SignVector = Vec<i8>;

/// Greedy attempts per accepted element before giving up.
pub const PACKING_ATTEMPTS: usize = 10_000;
/// Packings stop growing at this size.
pub const PACKING_CAP: usize = 1024;

#[derive(Clone, Debug, PartialEq)]
pub struct Packing {
    pub vectors: Vec<SignVector>,
    /// `(2/√e)^{d/2}`
    pub target: f64,
    pub target_met: bool,
}

pub fn hamming(a: &[i8], b: &[i8]) -> usize {
    a.iter().zip(b).filter(|(x, y)| x != y).count()
}

/// Sign vectors with pairwise Hamming distance `≥ ⌈d/4⌉` and at least `d/4`
/// positive entries (so `−𝟙` never appears), grown greedily from random
/// candidates.
pub fn gen_packing(d: usize, stream: &mut RngStream) -> Result<Packing> {
    if d < 4 {
        return Err(Error::invalid("d", format!("{d} < 4")));
    }
    let min_dist = d.div_ceil(4);
    let mut vectors: Vec<SignVector> = Vec::new();
    let mut failures = 0;
    while failures < PACKING_ATTEMPTS && vectors.len() < PACKING_CAP {
        let cand: SignVector = (0..d).map(|_| if stream.sign() > 0.0 { 1 } else { -1 }).collect();
        let positives = cand.iter().filter(|v| **v > 0).count();
        if 4 * positives >= d && vectors.iter().all(|v| hamming(v, &cand) >= min_dist) {
            vectors.push(cand);
            failures = 0;
        } else {
            failures += 1;
        }
    }
    let target = (2.0 / 1f64.exp().sqrt()).powf(d as f64 / 2.0);
    let target_met = vectors.len() as f64 >= target;
    if !target_met {
        log::warn!("packing in dimension {d}: {} vectors, target {target:.2}", vectors.len());
    }
    Ok(Packing {
        vectors,
        target,
        target_met,
    })
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum HardFamily {
    Nonsmooth,
    StronglyConvex,
}

impl FromStr for HardFamily {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "nonsmooth" => Ok(HardFamily::Nonsmooth),
            "stronglyconvex" | "strongly_convex" => Ok(HardFamily::StronglyConvex),
            other => Err(Error::invalid("family", format!("unknown family {other:?}"))),
        }
    }
}

#[derive(Clone, Debug)]
pub struct HardInstance {
    pub family: HardFamily,
    pub alpha: Vec<f64>,
    pub delta: f64,
    pub deltas: Vec<f64>,
    pub problems: Vec<AgentProblem>,
    /// Function-gap bounds the instance satisfies.
    pub function_gap: BiasMatrix,
    /// Gradient-gap bounds the instance satisfies.
    pub gradient_gap: BiasMatrix,
}

/// Per-agent shifts relative to agent 0: `(δ − b_i0/2)⁺` for the nonsmooth
/// family, `(δ − √b_0i)⁺` for the strongly convex one.
pub fn hard_deltas(family: HardFamily, delta: f64, b: &BiasMatrix) -> Vec<f64> {
    (0..b.n())
        .map(|i| match family {
            HardFamily::Nonsmooth => (delta - b.get(i, 0) / 2.0).max(0.0),
            HardFamily::StronglyConvex => (delta - b.get(0, i).sqrt()).max(0.0),
        })
        .collect()
}

/// Hard instance of `family` for sign vector `alpha`, level `delta` and
/// bias `b`. Nonsmooth agents use the piecewise-linear loss with the given
/// rescale factor; strongly convex agents use the `1/d`-scaled quadratic on
/// Bernoulli vectors with means `½ + δ_i α_k`.
pub fn gen_hard(family: HardFamily, alpha: &[f64], delta: f64, b: &BiasMatrix, scale: f64) -> Result<HardInstance> {
    let deltas = hard_deltas(family, delta, b);
    gen_hard_with_deltas(family, alpha, delta, deltas, b, scale)
}

/// As [`gen_hard`] with explicit per-agent shifts.
pub fn gen_hard_with_deltas(
    family: HardFamily,
    alpha: &[f64],
    delta: f64,
    deltas: Vec<f64>,
    b: &BiasMatrix,
    scale: f64,
) -> Result<HardInstance> {
    if !(delta > 0.0 && delta <= 0.5) {
        return Err(Error::invalid("delta", format!("{delta} outside (0, ½]")));
    }
    if alpha.is_empty() || alpha.iter().any(|a| a.abs() != 1.0) {
        return Err(Error::invalid("alpha", "must be a non-empty sign vector"));
    }
    crate::error::check_dim(b.n(), deltas.len())?;
    let d = alpha.len() as f64;
    let problems = deltas
        .iter()
        .map(|&di| match family {
            HardFamily::Nonsmooth => AgentProblem::new(
                LossKind::PiecewiseLinearHard { delta, scale },
                AgentDistribution::ScaledCoordinateBernoulli {
                    delta: di,
                    alpha: alpha.to_vec(),
                },
            ),
            HardFamily::StronglyConvex => AgentProblem::new(
                LossKind::QuadraticHard,
                AgentDistribution::BernoulliVector {
                    p: alpha.iter().map(|a| 0.5 + di * a).collect(),
                },
            ),
        })
        .collect::<Result<Vec<_>>>()?;
    let gradient = match family {
        HardFamily::Nonsmooth => b.entries().map(|v| scale * scale * v * v / d),
        HardFamily::StronglyConvex => b.entries() / d,
    };
    Ok(HardInstance {
        family,
        alpha: alpha.to_vec(),
        delta,
        deltas,
        problems,
        function_gap: b.clone().with_flavor(BiasFlavor::FunctionGap),
        gradient_gap: BiasMatrix::new(gradient, BiasFlavor::GradientGap)?,
    })
}
