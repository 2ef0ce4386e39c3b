//! Agent objectives `f_i(x) = E_{ξ~D_i} ℓ(x, ξ)`, their sampling
//! distributions, closed-form minimizers and unbiased stochastic gradients.

use std::collections::BTreeMap;

use nalgebra::{DMatrix, DVector};

use crate::error::{check_dim, Error, Result};
use crate::rng::{Domain, RngStream};

pub type Point = DVector<f64>;

/// Largest Bernoulli dimension whose support is enumerated exactly.
const MAX_ENUM_DIM: usize = 16;

#[derive(Clone, Debug, PartialEq)]
pub enum LossKind {
    /// `½‖x − ξ‖²`
    MeanEstimation,
    /// `½(aᵀx − b)²` with `ξ = (a, b)`
    LinearRegression,
    /// `log(1 + exp(−b aᵀx))`
    LogisticRegression,
    /// `max(0, 1 − b aᵀx)`
    Hinge,
    /// Piecewise-linear hard family on coordinate samples `(k, β)`:
    /// `β|s·x_k + ½| + (1 − β)|s·x_k − ½| − δ·s·x_k`. Averaging over the
    /// uniform coordinate `k` gives the `1/d`-scaled objective.
    PiecewiseLinearHard { delta: f64, scale: f64 },
    /// `(1/d)·½‖x − ξ‖²`, mean estimation with `μ = L = 1/d`.
    QuadraticHard,
}

impl LossKind {
    pub fn name(&self) -> &'static str {
        match self {
            LossKind::MeanEstimation => "mean_estimation",
            LossKind::LinearRegression => "linear_regression",
            LossKind::LogisticRegression => "logistic_regression",
            LossKind::Hinge => "hinge",
            LossKind::PiecewiseLinearHard { .. } => "piecewise_linear_hard",
            LossKind::QuadraticHard => "quadratic_hard",
        }
    }

    fn is_labeled(&self) -> bool {
        matches!(
            self,
            LossKind::LinearRegression | LossKind::LogisticRegression | LossKind::Hinge
        )
    }

    /// Smoothness and strong-convexity constants `(μ, L)` when the loss is a
    /// quadratic with identity-proportional curvature.
    pub fn curvature(&self, dim: usize) -> Option<(f64, f64)> {
        match self {
            LossKind::MeanEstimation => Some((1.0, 1.0)),
            LossKind::QuadraticHard => {
                let c = 1.0 / dim as f64;
                Some((c, c))
            }
            _ => None,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub enum AgentDistribution {
    /// Independent coordinates `ξ_k ~ Ber(p_k)`.
    BernoulliVector { p: Vec<f64> },
    /// `ξ = β·e_k` with `k` uniform on `{0..d}` and `β ~ Ber(½ + δ·α_k)`.
    ScaledCoordinateBernoulli { delta: f64, alpha: Vec<f64> },
    /// `ξ ~ N(mean, std²·I)`
    GaussianVector { mean: Vec<f64>, std: f64 },
    /// Uniform draw with replacement from a fixed sample list.
    Empirical { samples: Vec<Point> },
}

/// One data item `ξ`.
#[derive(Clone, Debug, PartialEq)]
pub enum Sample {
    Vector(Point),
    /// Coordinate sample `β·e_index`; the index is kept because the hard loss
    /// needs it even when `β = 0`.
    Coordinate { index: usize, bit: f64 },
}

impl AgentDistribution {
    pub fn dim(&self) -> usize {
        match self {
            AgentDistribution::BernoulliVector { p } => p.len(),
            AgentDistribution::ScaledCoordinateBernoulli { alpha, .. } => alpha.len(),
            AgentDistribution::GaussianVector { mean, .. } => mean.len(),
            AgentDistribution::Empirical { samples } => samples.first().map_or(0, |s| s.len()),
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.dim() == 0 {
            return Err(Error::invalid("dist", "zero-dimensional distribution"));
        }
        match self {
            AgentDistribution::BernoulliVector { p } => {
                if let Some(bad) = p.iter().find(|v| !(0.0..=1.0).contains(*v)) {
                    return Err(Error::invalid("p", format!("{bad} outside [0, 1]")));
                }
            }
            AgentDistribution::ScaledCoordinateBernoulli { delta, alpha } => {
                for a in alpha {
                    let q = 0.5 + delta * a;
                    if !(0.0..=1.0).contains(&q) {
                        return Err(Error::invalid("delta", format!("½ + δα_k = {q} outside [0, 1]")));
                    }
                }
            }
            AgentDistribution::GaussianVector { std, .. } => {
                if !(*std >= 0.0) {
                    return Err(Error::invalid("std", format!("{std} must be ≥ 0")));
                }
            }
            AgentDistribution::Empirical { samples } => {
                let d = self.dim();
                if samples.iter().any(|s| s.len() != d) {
                    return Err(Error::invalid("samples", "ragged empirical samples"));
                }
            }
        }
        Ok(())
    }

    /// Per-coordinate Bernoulli parameters `½ + δ·α_k` of a coordinate
    /// distribution.
    pub fn coordinate_probs(&self) -> Option<Vec<f64>> {
        match self {
            AgentDistribution::ScaledCoordinateBernoulli { delta, alpha } => {
                Some(alpha.iter().map(|a| 0.5 + delta * a).collect())
            }
            _ => None,
        }
    }

    pub fn draw(&self, stream: &mut RngStream) -> Sample {
        match self {
            AgentDistribution::BernoulliVector { p } => Sample::Vector(DVector::from_iterator(
                p.len(),
                p.iter().map(|&q| if stream.bernoulli(q) { 1.0 } else { 0.0 }),
            )),
            AgentDistribution::ScaledCoordinateBernoulli { delta, alpha } => {
                let index = stream.index(alpha.len());
                let bit = if stream.bernoulli(0.5 + delta * alpha[index]) {
                    1.0
                } else {
                    0.0
                };
                Sample::Coordinate { index, bit }
            }
            AgentDistribution::GaussianVector { mean, std } => Sample::Vector(DVector::from_iterator(
                mean.len(),
                mean.iter().map(|m| m + std * stream.normal()),
            )),
            AgentDistribution::Empirical { samples } => {
                Sample::Vector(samples[stream.index(samples.len())].clone())
            }
        }
    }

    /// `E[ξ]`, with coordinate samples read as the vector `β·e_k`.
    pub fn mean(&self) -> Point {
        match self {
            AgentDistribution::BernoulliVector { p } => DVector::from_column_slice(p),
            AgentDistribution::ScaledCoordinateBernoulli { .. } => {
                let probs = self.coordinate_probs().unwrap_or_default();
                let d = probs.len() as f64;
                DVector::from_iterator(probs.len(), probs.iter().map(|q| q / d))
            }
            AgentDistribution::GaussianVector { mean, .. } => DVector::from_column_slice(mean),
            AgentDistribution::Empirical { samples } => {
                let mut acc = DVector::zeros(self.dim());
                for s in samples {
                    acc += s;
                }
                acc / samples.len() as f64
            }
        }
    }

    /// `E[ξξᵀ]`
    pub fn second_moment(&self) -> DMatrix<f64> {
        let d = self.dim();
        match self {
            AgentDistribution::BernoulliVector { p } => {
                let m = DVector::from_column_slice(p);
                let mut s = &m * m.transpose();
                for k in 0..d {
                    s[(k, k)] = p[k];
                }
                s
            }
            AgentDistribution::ScaledCoordinateBernoulli { .. } => {
                let probs = self.coordinate_probs().unwrap_or_default();
                DMatrix::from_diagonal(&DVector::from_iterator(
                    d,
                    probs.iter().map(|q| q / d as f64),
                ))
            }
            AgentDistribution::GaussianVector { mean, std } => {
                let m = DVector::from_column_slice(mean);
                &m * m.transpose() + DMatrix::identity(d, d) * (std * std)
            }
            AgentDistribution::Empirical { samples } => {
                let mut acc = DMatrix::zeros(d, d);
                for s in samples {
                    acc += s * s.transpose();
                }
                acc / samples.len() as f64
            }
        }
    }

    /// `tr Cov(ξ)`
    pub fn total_variance(&self) -> f64 {
        let m = self.mean();
        self.second_moment().trace() - m.norm_squared()
    }

    /// Exact finite support as `(atom, probability)` pairs, merged by value.
    /// `None` for continuous distributions or Bernoulli vectors too large to
    /// enumerate.
    pub fn atoms(&self) -> Option<Vec<(Point, f64)>> {
        let mut merged: BTreeMap<Vec<u64>, (Point, f64)> = BTreeMap::new();
        let mut push = |v: Point, w: f64| {
            if w <= 0.0 {
                return;
            }
            let key: Vec<u64> = v.iter().map(|x| canonical_bits(*x)).collect();
            merged.entry(key).or_insert_with(|| (v, 0.0)).1 += w;
        };
        match self {
            AgentDistribution::BernoulliVector { p } => {
                if p.len() > MAX_ENUM_DIM {
                    return None;
                }
                for mask in 0u32..(1u32 << p.len()) {
                    let mut w = 1.0;
                    let v = DVector::from_iterator(
                        p.len(),
                        (0..p.len()).map(|k| {
                            if mask >> k & 1 == 1 {
                                w *= p[k];
                                1.0
                            } else {
                                w *= 1.0 - p[k];
                                0.0
                            }
                        }),
                    );
                    push(v, w);
                }
            }
            AgentDistribution::ScaledCoordinateBernoulli { .. } => {
                let probs = self.coordinate_probs().unwrap_or_default();
                let d = probs.len();
                let zero_mass: f64 = probs.iter().map(|q| (1.0 - q) / d as f64).sum();
                push(DVector::zeros(d), zero_mass);
                for (k, q) in probs.iter().enumerate() {
                    let mut e = DVector::zeros(d);
                    e[k] = 1.0;
                    push(e, q / d as f64);
                }
            }
            AgentDistribution::GaussianVector { std, mean } => {
                if *std != 0.0 {
                    return None;
                }
                push(DVector::from_column_slice(mean), 1.0);
            }
            AgentDistribution::Empirical { samples } => {
                let w = 1.0 / samples.len() as f64;
                for s in samples {
                    push(s.clone(), w);
                }
            }
        }
        Some(merged.into_values().collect())
    }
}

fn canonical_bits(x: f64) -> u64 {
    // -0.0 and 0.0 are the same atom
    if x == 0.0 {
        0
    } else {
        x.to_bits()
    }
}

/// Zero at the kink: the tie-break used for every subgradient.
fn sign0(v: f64) -> f64 {
    if v > 0.0 {
        1.0
    } else if v < 0.0 {
        -1.0
    } else {
        0.0
    }
}

fn logistic_slope(margin: f64) -> f64 {
    // d/dm log(1 + e^{-m}) = -1 / (1 + e^{m})
    -1.0 / (1.0 + margin.exp())
}

fn softplus_neg(margin: f64) -> f64 {
    // log(1 + e^{-m}), stable for large |m|
    if margin > 0.0 {
        (-margin).exp().ln_1p()
    } else {
        -margin + margin.exp().ln_1p()
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Optimum {
    pub minimizer: Point,
    pub value: f64,
}

/// Noise constants entering step-size rules.
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct NoiseConstants {
    /// `sup_x E‖g(x) − ∇f(x)‖²`
    pub sigma2: Option<f64>,
    /// `sup_x E‖g(x)‖²`, when bounded on all of `ℝ^d`.
    pub b2: Option<f64>,
}

#[derive(Clone, Debug)]
pub struct AgentProblem {
    loss: LossKind,
    dist: AgentDistribution,
    dim: usize,
    optimum: Option<Optimum>,
    noise: NoiseConstants,
    mean: Point,
    total_variance: f64,
}

impl AgentProblem {
    pub fn new(loss: LossKind, dist: AgentDistribution) -> Result<Self> {
        dist.validate()?;
        let coordinate = matches!(dist, AgentDistribution::ScaledCoordinateBernoulli { .. });
        let dim = match &loss {
            LossKind::PiecewiseLinearHard { delta, scale } => {
                if !coordinate {
                    return Err(Error::Unsupported(
                        "piecewise_linear_hard needs a scaled coordinate Bernoulli distribution".into(),
                    ));
                }
                if !(*scale > 0.0) {
                    return Err(Error::invalid("scale", "must be > 0"));
                }
                if !(0.0..=0.5).contains(delta) {
                    return Err(Error::invalid("delta", format!("{delta} outside [0, ½]")));
                }
                dist.dim()
            }
            _ if coordinate => {
                return Err(Error::Unsupported(format!(
                    "{} cannot consume coordinate samples",
                    loss.name()
                )))
            }
            l if l.is_labeled() => {
                if dist.dim() < 2 {
                    return Err(Error::invalid("dist", "labeled losses need (a, b) of dimension ≥ 2"));
                }
                dist.dim() - 1
            }
            _ => dist.dim(),
        };
        let (mean, total_variance) = (dist.mean(), dist.total_variance());
        let mut problem = Self {
            loss,
            dist,
            dim,
            optimum: None,
            noise: NoiseConstants::default(),
            mean,
            total_variance,
        };
        problem.noise = problem.analytic_noise();
        if let Ok(minimizer) = problem.minimizer_of() {
            let value = problem.true_objective(&minimizer)?;
            problem.optimum = Some(Optimum { minimizer, value });
        }
        Ok(problem)
    }

    pub fn mean_estimation(dist: AgentDistribution) -> Result<Self> {
        Self::new(LossKind::MeanEstimation, dist)
    }

    pub fn loss(&self) -> &LossKind {
        &self.loss
    }

    pub fn dist(&self) -> &AgentDistribution {
        &self.dist
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn optimum(&self) -> Option<&Optimum> {
        self.optimum.as_ref()
    }

    pub fn optimal_value(&self) -> Option<f64> {
        self.optimum.as_ref().map(|o| o.value)
    }

    pub fn minimizer(&self) -> Option<&Point> {
        self.optimum.as_ref().map(|o| &o.minimizer)
    }

    /// Attach an optimum found numerically (e.g. by the SGD toolbox).
    pub fn with_optimum(mut self, minimizer: Point) -> Result<Self> {
        check_dim(self.dim, minimizer.len())?;
        let value = self.true_objective(&minimizer)?;
        self.optimum = Some(Optimum { minimizer, value });
        Ok(self)
    }

    pub fn noise(&self) -> NoiseConstants {
        self.noise
    }

    /// Fill noise constants without a closed form by a Monte-Carlo pilot at
    /// `at`: `σ²` from the empirical gradient variance, `B²` from the
    /// empirical second moment.
    pub fn with_pilot_noise(mut self, at: &Point, samples: usize, seed: u64) -> Result<Self> {
        check_dim(self.dim, at.len())?;
        if self.noise.sigma2.is_some() && self.noise.b2.is_some() {
            return Ok(self);
        }
        let mut stream = RngStream::new(seed, Domain::Aux, 0x5107, 0);
        let mut mean = DVector::zeros(self.dim);
        let mut sq = 0.0;
        let grads: Vec<Point> = (0..samples)
            .map(|_| {
                let s = self.dist.draw(&mut stream);
                self.gradient_at(&s, at)
            })
            .collect();
        for g in &grads {
            mean += g;
            sq += g.norm_squared();
        }
        let n = samples as f64;
        mean /= n;
        let second = sq / n;
        if self.noise.sigma2.is_none() {
            self.noise.sigma2 = Some((second - mean.norm_squared()).max(0.0) * n / (n - 1.0));
        }
        if self.noise.b2.is_none() {
            self.noise.b2 = Some(second);
        }
        Ok(self)
    }

    fn analytic_noise(&self) -> NoiseConstants {
        let d = self.dim as f64;
        match &self.loss {
            LossKind::MeanEstimation => NoiseConstants {
                sigma2: Some(self.total_variance.max(0.0)),
                b2: None,
            },
            LossKind::QuadraticHard => NoiseConstants {
                sigma2: Some(self.total_variance.max(0.0) / (d * d)),
                b2: None,
            },
            LossKind::PiecewiseLinearHard { delta, scale } => {
                let b2 = (scale * (1.0 + delta)).powi(2);
                NoiseConstants {
                    sigma2: Some(b2),
                    b2: Some(b2),
                }
            }
            LossKind::LogisticRegression | LossKind::Hinge => {
                // |slope| ≤ 1, so ‖g‖ ≤ ‖a‖
                let m = self.dist.second_moment();
                let b2 = m.trace() - m[(self.dim, self.dim)];
                NoiseConstants {
                    sigma2: Some(b2),
                    b2: Some(b2),
                }
            }
            LossKind::LinearRegression => NoiseConstants::default(),
        }
    }

    fn split_labeled<'a>(&self, v: &'a Point) -> (nalgebra::DVectorView<'a, f64>, f64) {
        (v.rows(0, self.dim), v[self.dim])
    }

    /// `f_i(x)` in closed form.
    pub fn true_objective(&self, x: &Point) -> Result<f64> {
        check_dim(self.dim, x.len())?;
        let d = self.dim as f64;
        match &self.loss {
            LossKind::MeanEstimation | LossKind::QuadraticHard => {
                let v = 0.5 * (x - &self.mean).norm_squared() + 0.5 * self.total_variance;
                Ok(if self.loss == LossKind::QuadraticHard { v / d } else { v })
            }
            LossKind::LinearRegression => {
                let m = self.dist.second_moment();
                let mut w = DVector::from_element(self.dim + 1, -1.0);
                w.rows_mut(0, self.dim).copy_from(x);
                Ok(0.5 * (w.transpose() * &m * &w)[(0, 0)])
            }
            LossKind::LogisticRegression | LossKind::Hinge => {
                let atoms = self
                    .dist
                    .atoms()
                    .ok_or(Error::NumericOnly("expected loss over a continuous distribution"))?;
                Ok(atoms
                    .iter()
                    .map(|(z, w)| w * self.pointwise_loss(z, x))
                    .sum())
            }
            LossKind::PiecewiseLinearHard { delta, scale } => {
                let probs = self.dist.coordinate_probs().unwrap_or_default();
                let total: f64 = probs
                    .iter()
                    .zip(x.iter())
                    .map(|(q, xk)| {
                        let u = scale * xk;
                        q * (u + 0.5).abs() + (1.0 - q) * (u - 0.5).abs() - delta * u
                    })
                    .sum();
                Ok(total / d)
            }
        }
    }

    fn pointwise_loss(&self, z: &Point, x: &Point) -> f64 {
        let (a, b) = self.split_labeled(z);
        let margin = b * a.dot(x);
        match self.loss {
            LossKind::LogisticRegression => softplus_neg(margin),
            LossKind::Hinge => (1.0 - margin).max(0.0),
            LossKind::LinearRegression => 0.5 * (a.dot(x) - b).powi(2),
            _ => unreachable!("pointwise loss only for labeled losses"),
        }
    }

    /// `E[g(x)]`: the gradient of `f_i`, or at kinks the subgradient picked by
    /// the zero tie-break averaged over the data.
    pub fn expected_gradient(&self, x: &Point) -> Result<Point> {
        check_dim(self.dim, x.len())?;
        let d = self.dim as f64;
        match &self.loss {
            LossKind::MeanEstimation => Ok(x - &self.mean),
            LossKind::QuadraticHard => Ok((x - &self.mean) / d),
            LossKind::LinearRegression => {
                let m = self.dist.second_moment();
                let maa = m.view((0, 0), (self.dim, self.dim));
                let mab = m.view((0, self.dim), (self.dim, 1));
                Ok(maa * x - mab.column(0))
            }
            LossKind::LogisticRegression | LossKind::Hinge => {
                let atoms = self
                    .dist
                    .atoms()
                    .ok_or(Error::NumericOnly("expected gradient over a continuous distribution"))?;
                let mut acc = DVector::zeros(self.dim);
                for (z, w) in &atoms {
                    acc += self.gradient_at(&Sample::Vector(z.clone()), x) * *w;
                }
                Ok(acc)
            }
            LossKind::PiecewiseLinearHard { delta, scale } => {
                let probs = self.dist.coordinate_probs().unwrap_or_default();
                Ok(DVector::from_iterator(
                    self.dim,
                    probs.iter().zip(x.iter()).map(|(q, xk)| {
                        let u = scale * xk;
                        scale * (q * sign0(u + 0.5) + (1.0 - q) * sign0(u - 0.5) - delta) / d
                    }),
                ))
            }
        }
    }

    /// `f_i(x) − f_i(x_i^⋆)`, clamped at 0. Quadratic families use the
    /// cancellation-free form `c/2·‖x − x_i^⋆‖²`.
    pub fn excess(&self, x: &Point) -> Result<f64> {
        check_dim(self.dim, x.len())?;
        match self.loss {
            LossKind::MeanEstimation => Ok(0.5 * (x - &self.mean).norm_squared()),
            LossKind::QuadraticHard => Ok(0.5 * (x - &self.mean).norm_squared() / self.dim as f64),
            _ => {
                let best = self.optimal_value().ok_or(Error::MissingOptimum(0))?;
                Ok((self.true_objective(x)? - best).max(0.0))
            }
        }
    }

    /// `(A, c)` with `f(x) = ½xᵀAx − cᵀx + const` for quadratic losses.
    pub fn quadratic_form(&self) -> Option<(DMatrix<f64>, Point)> {
        let d = self.dim;
        match self.loss {
            LossKind::MeanEstimation => Some((DMatrix::identity(d, d), self.mean.clone())),
            LossKind::QuadraticHard => {
                let c = 1.0 / d as f64;
                Some((DMatrix::identity(d, d) * c, &self.mean * c))
            }
            LossKind::LinearRegression => {
                let m = self.dist.second_moment();
                Some((
                    m.view((0, 0), (d, d)).clone_owned(),
                    m.view((0, d), (d, 1)).column(0).clone_owned(),
                ))
            }
            _ => None,
        }
    }

    /// Lipschitz constant of `∇f_i`, when `f_i` is smooth.
    pub fn smoothness(&self) -> Option<f64> {
        match self.loss {
            LossKind::MeanEstimation => Some(1.0),
            LossKind::QuadraticHard => Some(1.0 / self.dim as f64),
            LossKind::LinearRegression | LossKind::LogisticRegression => {
                let m = self.dist.second_moment();
                let a = m.view((0, 0), (self.dim, self.dim)).clone_owned();
                let top = a.symmetric_eigenvalues().max();
                Some(if self.loss == LossKind::LogisticRegression { top / 4.0 } else { top })
            }
            _ => None,
        }
    }

    pub fn draw(&self, stream: &mut RngStream) -> Sample {
        self.dist.draw(stream)
    }

    /// `∇_x ℓ(x, ξ)` for one data item (zero tie-break at kinks).
    pub fn gradient_at(&self, sample: &Sample, x: &Point) -> Point {
        match (sample, &self.loss) {
            (Sample::Coordinate { index, bit }, LossKind::PiecewiseLinearHard { delta, scale }) => {
                let u = scale * x[*index];
                let mut g = DVector::zeros(self.dim);
                g[*index] = scale * (bit * sign0(u + 0.5) + (1.0 - bit) * sign0(u - 0.5) - delta);
                g
            }
            (Sample::Vector(xi), LossKind::MeanEstimation) => x - xi,
            (Sample::Vector(xi), LossKind::QuadraticHard) => (x - xi) / self.dim as f64,
            (Sample::Vector(z), LossKind::LinearRegression) => {
                let (a, b) = self.split_labeled(z);
                a * (a.dot(x) - b)
            }
            (Sample::Vector(z), LossKind::LogisticRegression) => {
                let (a, b) = self.split_labeled(z);
                a * (b * logistic_slope(b * a.dot(x)))
            }
            (Sample::Vector(z), LossKind::Hinge) => {
                let (a, b) = self.split_labeled(z);
                if 1.0 - b * a.dot(x) > 0.0 {
                    a * -b
                } else {
                    DVector::zeros(self.dim)
                }
            }
            _ => unreachable!("sample kind checked at construction"),
        }
    }

    /// Draw `ξ` from `stream` and return `∇_x ℓ(x, ξ)`.
    pub fn sample_gradient(&self, x: &Point, stream: &mut RngStream) -> Result<Point> {
        check_dim(self.dim, x.len())?;
        let s = self.draw(stream);
        Ok(self.gradient_at(&s, x))
    }

    /// Closed-form minimizer of `f_i`.
    pub fn minimizer_of(&self) -> Result<Point> {
        match &self.loss {
            LossKind::MeanEstimation | LossKind::QuadraticHard => Ok(self.mean.clone()),
            LossKind::PiecewiseLinearHard { delta, scale } => {
                let probs = self.dist.coordinate_probs().unwrap_or_default();
                // Per coordinate the slope on (−½, ½) is 2q − 1 − δ; a
                // non-negative slope puts the minimum at the left kink.
                Ok(DVector::from_iterator(
                    self.dim,
                    probs.iter().map(|q| {
                        let u = if 2.0 * q - 1.0 - delta >= 0.0 { -0.5 } else { 0.5 };
                        u / scale
                    }),
                ))
            }
            LossKind::LinearRegression => {
                let m = self.dist.second_moment();
                let maa = m.view((0, 0), (self.dim, self.dim)).clone_owned();
                let mab = m.view((0, self.dim), (self.dim, 1)).column(0).clone_owned();
                Ok(crate::linalg::psd_solve(&maa, &mab))
            }
            LossKind::LogisticRegression => Err(Error::NumericOnly("logistic regression minimizer")),
            LossKind::Hinge => Err(Error::NumericOnly("hinge minimizer")),
        }
    }
}
