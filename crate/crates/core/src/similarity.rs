//! Distribution distances, bias matrices and assumption validators.
//!
//! All threshold comparisons are non-strict: agent `j` is within `ε` of `i`
//! when `b_ij ≤ ε`.

use std::collections::BTreeMap;
use std::io::{Read, Write};
use std::path::Path;

use nalgebra::{DMatrix, DVector};

use crate::error::{check_dim, Error, Result};
use crate::exec::Execution;
use crate::problem::{AgentDistribution, AgentProblem, Point};
use crate::rng::{Domain, RngStream};

/// Absolute slack for the triangle-inequality flag.
const TRIANGLE_TOL: f64 = 1e-12;

#[derive(Clone, Copy, Debug, PartialEq)]
pub enum BiasFlavor {
    /// `f_i(x_j^⋆) − f_i(x_i^⋆) ≤ b_ij`
    FunctionGap,
    /// `‖∇f_i(x) − ∇f_j(x)‖² ≤ b̃_ij` for all `x`
    GradientGap,
    /// `‖∇f_i − g_λ‖² ≤ m‖g_λ‖² + Σ_j λ_j b̃_ij` for all stochastic `λ`
    Dissimilarity { m: f64 },
}

#[derive(Clone, Debug, PartialEq)]
pub struct BiasMatrix {
    entries: DMatrix<f64>,
    flavor: BiasFlavor,
    triangle: bool,
}

impl BiasMatrix {
    /// Entries may be `+∞` (agents that never collaborate).
    pub fn new(entries: DMatrix<f64>, flavor: BiasFlavor) -> Result<Self> {
        let n = entries.nrows();
        if entries.ncols() != n {
            return Err(Error::DimensionMismatch {
                expected: n,
                got: entries.ncols(),
            });
        }
        if n == 0 {
            return Err(Error::invalid("b", "empty bias matrix"));
        }
        for i in 0..n {
            if entries[(i, i)] != 0.0 {
                return Err(Error::invalid("b", format!("b[{i}][{i}] = {} ≠ 0", entries[(i, i)])));
            }
        }
        if let Some(v) = entries.iter().find(|v| !(**v >= 0.0)) {
            return Err(Error::invalid("b", format!("entry {v} is not ≥ 0")));
        }
        if let BiasFlavor::Dissimilarity { m } = flavor {
            if !(m >= 0.0) {
                return Err(Error::invalid("m", "must be ≥ 0"));
            }
        }
        let triangle = satisfies_triangle(&entries);
        Ok(Self {
            entries,
            flavor,
            triangle,
        })
    }

    pub fn function_gap(entries: DMatrix<f64>) -> Result<Self> {
        Self::new(entries, BiasFlavor::FunctionGap)
    }

    pub fn zeros(n: usize) -> Self {
        Self::function_gap(DMatrix::zeros(n, n)).expect("zero matrix is a valid bias")
    }

    /// `+∞` off the diagonal: every agent is alone.
    pub fn isolated(n: usize) -> Self {
        let mut e = DMatrix::from_element(n, n, f64::INFINITY);
        e.fill_diagonal(0.0);
        Self::function_gap(e).expect("isolated matrix is a valid bias")
    }

    pub fn n(&self) -> usize {
        self.entries.nrows()
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.entries[(i, j)]
    }

    pub fn entries(&self) -> &DMatrix<f64> {
        &self.entries
    }

    pub fn flavor(&self) -> BiasFlavor {
        self.flavor
    }

    /// Whether `b_ij ≤ b_ik + b_kj` holds for every triple.
    pub fn triangle(&self) -> bool {
        self.triangle
    }

    pub fn is_symmetric(&self) -> bool {
        self.entries == self.entries.transpose()
    }

    pub fn with_flavor(mut self, flavor: BiasFlavor) -> Self {
        self.flavor = flavor;
        self
    }

    pub fn write_csv<W: Write>(&self, w: W) -> Result<()> {
        let mut out = csv::WriterBuilder::new().flexible(true).from_writer(w);
        out.write_record([format!("n={}", self.n())])?;
        for i in 0..self.n() {
            out.write_record(self.entries.row(i).iter().map(|v| v.to_string()))?;
        }
        out.flush()?;
        Ok(())
    }

    pub fn read_csv<R: Read>(r: R, flavor: BiasFlavor) -> Result<Self> {
        let mut rdr = csv::ReaderBuilder::new()
            .has_headers(false)
            .flexible(true)
            .trim(csv::Trim::All)
            .from_reader(r);
        let mut records = rdr.records();
        let header = records
            .next()
            .ok_or_else(|| Error::invalid("bias csv", "empty file"))??;
        let n: usize = header
            .get(0)
            .and_then(|h| h.strip_prefix("n="))
            .and_then(|v| v.parse().ok())
            .ok_or_else(|| Error::invalid("bias csv", "first line must be n=<N>"))?;
        let mut data = Vec::with_capacity(n * n);
        for (row, rec) in records.enumerate() {
            let rec = rec?;
            if rec.len() != n {
                return Err(Error::invalid("bias csv", format!("row {row} has {} entries", rec.len())));
            }
            for field in rec.iter() {
                data.push(
                    field
                        .parse::<f64>()
                        .map_err(|e| Error::invalid("bias csv", format!("{field:?}: {e}")))?,
                );
            }
        }
        if data.len() != n * n {
            return Err(Error::invalid("bias csv", format!("expected {n} rows")));
        }
        Self::new(DMatrix::from_row_slice(n, n, &data), flavor)
    }

    pub fn write_file(&self, path: impl AsRef<Path>) -> Result<()> {
        self.write_csv(std::fs::File::create(path)?)
    }

    pub fn read_file(path: impl AsRef<Path>, flavor: BiasFlavor) -> Result<Self> {
        Self::read_csv(std::fs::File::open(path)?, flavor)
    }
}

fn satisfies_triangle(b: &DMatrix<f64>) -> bool {
    let n = b.nrows();
    (0..n).all(|i| {
        (0..n).all(|j| (0..n).all(|k| b[(i, j)] <= b[(i, k)] + b[(k, j)] + TRIANGLE_TOL))
    })
}

/// `N_i^ε(b) = #{j : b_ij ≤ ε}`
pub fn neighborhood_count(b: &BiasMatrix, i: usize, eps: f64) -> usize {
    neighborhood_count_scaled(b, i, eps, 1.0)
}

/// `N_i^ε(c·b) = #{j : c·b_ij ≤ ε}`
pub fn neighborhood_count_scaled(b: &BiasMatrix, i: usize, eps: f64, scale: f64) -> usize {
    b.entries.row(i).iter().filter(|v| scale * **v <= eps).count()
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum DistanceFamily {
    /// `‖Eξ − Eξ'‖`
    MeanDistance,
    /// 1-d Wasserstein-1 between finite-support distributions.
    Wasserstein1,
    /// `½ Σ |P(a) − Q(a)|` over finite support.
    TotalVariation,
}

pub fn distance(family: DistanceFamily, p: &AgentDistribution, q: &AgentDistribution) -> Result<f64> {
    check_dim(p.dim(), q.dim())?;
    match family {
        DistanceFamily::MeanDistance => Ok((p.mean() - q.mean()).norm()),
        DistanceFamily::Wasserstein1 => {
            if p.dim() != 1 {
                return Err(Error::Unsupported(format!("Wasserstein-1 in dimension {}", p.dim())));
            }
            let (pa, qa) = finite_atoms(p, q, "Wasserstein-1")?;
            Ok(wasserstein1(&pa, &qa))
        }
        DistanceFamily::TotalVariation => {
            let (pa, qa) = finite_atoms(p, q, "total variation")?;
            let mut mass: BTreeMap<Vec<u64>, f64> = BTreeMap::new();
            for (v, w) in &pa {
                *mass.entry(atom_key(v)).or_default() += w;
            }
            for (v, w) in &qa {
                *mass.entry(atom_key(v)).or_default() -= w;
            }
            Ok(0.5 * mass.values().map(|m| m.abs()).sum::<f64>())
        }
    }
}

type Atoms = Vec<(Point, f64)>;

fn finite_atoms(p: &AgentDistribution, q: &AgentDistribution, what: &str) -> Result<(Atoms, Atoms)> {
    match (p.atoms(), q.atoms()) {
        (Some(a), Some(b)) => Ok((a, b)),
        _ => Err(Error::Unsupported(format!("{what} needs finite-support distributions"))),
    }
}

fn atom_key(v: &Point) -> Vec<u64> {
    v.iter().map(|x| if *x == 0.0 { 0 } else { x.to_bits() }).collect()
}

/// `∫ |F_P − F_Q|` for 1-d atoms.
fn wasserstein1(p: &[(Point, f64)], q: &[(Point, f64)]) -> f64 {
    let mut events: Vec<(f64, f64)> = p
        .iter()
        .map(|(v, w)| (v[0], *w))
        .chain(q.iter().map(|(v, w)| (v[0], -*w)))
        .collect();
    events.sort_by(|a, b| a.0.total_cmp(&b.0));
    let mut total = 0.0;
    let mut cdf_gap = 0.0;
    for pair in events.windows(2) {
        cdf_gap += pair[0].1;
        total += cdf_gap.abs() * (pair[1].0 - pair[0].0);
    }
    total
}

/// Bias matrices implied by a distance bound `d̂`.
#[derive(Clone, Debug)]
pub struct ConvertedBias {
    pub function_gap: BiasMatrix,
    pub gradient_gap: BiasMatrix,
}

/// `b = D⋆·d̂` (or `d̂²/(2μ)` when `μ` is given) and `b̃ = d̂²`.
pub fn bias_from_distance(dhat: &DMatrix<f64>, diameter: f64, mu: Option<f64>) -> Result<ConvertedBias> {
    if !(diameter > 0.0) {
        return Err(Error::invalid("diameter", "must be > 0"));
    }
    let function = match mu {
        Some(m) if !(m > 0.0) => return Err(Error::invalid("mu", "must be > 0")),
        Some(m) => dhat.map(|v| v * v / (2.0 * m)),
        None => dhat * diameter,
    };
    Ok(ConvertedBias {
        function_gap: BiasMatrix::new(function, BiasFlavor::FunctionGap)?,
        gradient_gap: BiasMatrix::new(dhat.map(|v| v * v), BiasFlavor::GradientGap)?,
    })
}

/// `b_ij = ½‖p_i − p_j‖²`
pub fn quadratic_bias(p: &[Point]) -> Result<BiasMatrix> {
    let n = p.len();
    if n == 0 {
        return Err(Error::invalid("p", "no agents"));
    }
    for v in p {
        check_dim(p[0].len(), v.len())?;
    }
    BiasMatrix::function_gap(DMatrix::from_fn(n, n, |i, j| 0.5 * (&p[i] - &p[j]).norm_squared()))
}

/// Offsets `n_i = noise·(2u_i − 1)`, `u_i` uniform on `[0, 1)`. The same
/// stream yields the same `u`, so amplitudes share their random numbers.
pub fn noise_offsets(n: usize, noise: f64, stream: &mut RngStream) -> Vec<f64> {
    (0..n).map(|_| noise * (2.0 * stream.uniform() - 1.0)).collect()
}

/// `b_ij = ½(p_i + n_i − p_j − n_j)²` with `n_i` uniform on `[−noise, noise]`.
pub fn noisy_bias(p: &[f64], noise: f64, stream: &mut RngStream) -> Result<BiasMatrix> {
    if !(noise >= 0.0) {
        return Err(Error::invalid("noise", "must be ≥ 0"));
    }
    let off = noise_offsets(p.len(), noise, stream);
    let shifted: Vec<Point> = p
        .iter()
        .zip(&off)
        .map(|(pi, ni)| DVector::from_element(1, pi + ni))
        .collect();
    quadratic_bias(&shifted)
}

/// `count` points uniform in the ball of radius `radius` around the origin.
pub fn ball_grid(dim: usize, radius: f64, count: usize, seed: u64) -> Vec<Point> {
    let mut s = RngStream::new(seed, Domain::Grid, dim as u64, 0);
    (0..count)
        .map(|_| {
            let dir = DVector::from_iterator(dim, (0..dim).map(|_| s.normal()));
            let r = radius * s.uniform().powf(1.0 / dim as f64);
            let norm = dir.norm();
            if norm > 0.0 {
                dir * (r / norm)
            } else {
                dir
            }
        })
        .collect()
}

/// `count` points uniform on the probability simplex of `ℝ^n`.
pub fn random_simplex(n: usize, count: usize, seed: u64) -> Vec<DVector<f64>> {
    let mut s = RngStream::new(seed, Domain::Grid, n as u64, 1);
    (0..count)
        .map(|_| {
            let e = DVector::from_iterator(n, (0..n).map(|_| -(1.0 - s.uniform()).ln()));
            let total = e.sum();
            e / total
        })
        .collect()
}

/// Worst-case residual per pair; non-positive means the bound holds.
#[derive(Clone, Debug, Default)]
pub struct ValidationReport {
    /// `f_i(x_j^⋆) − f_i(x_i^⋆) − b_ij`
    pub function_gap: Option<DMatrix<f64>>,
    /// Set when some agent lacks a minimizer and the function-gap check was skipped.
    pub function_gap_skipped: bool,
    /// `max_x ‖∇f_i(x) − ∇f_j(x)‖² − b̃_ij`
    pub gradient_gap: Option<DMatrix<f64>>,
    /// Per agent, `max_{x, λ} ‖∇f_i − g_λ‖² − m‖g_λ‖² − Σ_j λ_j b̃_ij`.
    pub dissimilarity: Option<Vec<f64>>,
}

impl ValidationReport {
    pub fn worst(&self) -> f64 {
        let m = |o: &Option<DMatrix<f64>>| o.as_ref().map_or(f64::NEG_INFINITY, |m| m.max());
        let d = self
            .dissimilarity
            .as_ref()
            .map_or(f64::NEG_INFINITY, |v| v.iter().copied().fold(f64::NEG_INFINITY, f64::max));
        m(&self.function_gap).max(m(&self.gradient_gap)).max(d)
    }

    pub fn passes(&self, tol: f64) -> bool {
        self.worst() <= tol
    }
}

/// Check the bound carried by `b` (its flavor selects which) on `problems`.
/// Gradient checks run over `grid`; the dissimilarity check also ranges over
/// `lambdas`.
pub fn validate_assumptions(
    problems: &[AgentProblem],
    b: &BiasMatrix,
    grid: &[Point],
    lambdas: &[DVector<f64>],
) -> Result<ValidationReport> {
    validate_assumptions_with(Execution::default(), problems, b, grid, lambdas)
}

pub fn validate_assumptions_with(
    exec: Execution,
    problems: &[AgentProblem],
    b: &BiasMatrix,
    grid: &[Point],
    lambdas: &[DVector<f64>],
) -> Result<ValidationReport> {
    let n = problems.len();
    check_dim(n, b.n())?;
    let mut report = ValidationReport::default();
    match b.flavor() {
        BiasFlavor::FunctionGap => {
            let optima: Option<Vec<_>> = problems.iter().map(|p| p.optimum().cloned()).collect();
            match optima {
                None => {
                    log::warn!("function-gap check skipped: an agent has no minimizer");
                    report.function_gap_skipped = true;
                }
                Some(opt) => {
                    let rows = exec.map(n, |i| {
                        (0..n)
                            .map(|j| {
                                problems[i]
                                    .true_objective(&opt[j].minimizer)
                                    .map(|v| v - opt[i].value - b.get(i, j))
                            })
                            .collect::<Result<Vec<f64>>>()
                    });
                    let mut m = DMatrix::zeros(n, n);
                    for (i, row) in rows.into_iter().enumerate() {
                        for (j, v) in row?.into_iter().enumerate() {
                            m[(i, j)] = v;
                        }
                    }
                    report.function_gap = Some(m);
                }
            }
        }
        BiasFlavor::GradientGap => {
            let grads = gradients_on_grid(exec, problems, grid)?;
            let rows = exec.map(n, |i| {
                (0..n)
                    .map(|j| {
                        let worst = grads[i]
                            .iter()
                            .zip(&grads[j])
                            .map(|(gi, gj)| (gi - gj).norm_squared())
                            .fold(f64::NEG_INFINITY, f64::max);
                        worst - b.get(i, j)
                    })
                    .collect::<Vec<f64>>()
            });
            report.gradient_gap = Some(DMatrix::from_fn(n, n, |i, j| rows[i][j]));
        }
        BiasFlavor::Dissimilarity { m } => {
            for l in lambdas {
                check_dim(n, l.len())?;
                if l.iter().any(|v| *v < 0.0) || (l.sum() - 1.0).abs() > 1e-9 {
                    return Err(Error::invalid("lambda", "not a stochastic vector"));
                }
            }
            let grads = gradients_on_grid(exec, problems, grid)?;
            let residual = exec.map(n, |i| {
                let mut worst = f64::NEG_INFINITY;
                for l in lambdas {
                    let budget: f64 = (0..n).map(|j| l[j] * b.get(i, j)).sum();
                    for (x, gi) in grads[i].iter().enumerate() {
                        let mut g = DVector::zeros(gi.len());
                        for j in 0..n {
                            g.axpy(l[j], &grads[j][x], 1.0);
                        }
                        let r = (gi - &g).norm_squared() - m * g.norm_squared() - budget;
                        worst = worst.max(r);
                    }
                }
                worst
            });
            report.dissimilarity = Some(residual);
        }
    }
    Ok(report)
}

fn gradients_on_grid(exec: Execution, problems: &[AgentProblem], grid: &[Point]) -> Result<Vec<Vec<Point>>> {
    exec.map_slice(problems, |p| grid.iter().map(|x| p.expected_gradient(x)).collect())
        .into_iter()
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::problem::AgentDistribution::*;

    fn b2(v: f64) -> BiasMatrix {
        BiasMatrix::function_gap(DMatrix::from_row_slice(2, 2, &[0.0, v, v, 0.0])).unwrap()
    }

    fn emp(xs: &[f64]) -> AgentDistribution {
        Empirical {
            samples: xs.iter().map(|x| DVector::from_element(1, *x)).collect(),
        }
    }

    #[test]
    fn neighborhood_examples() {
        assert_eq!(neighborhood_count(&b2(0.1), 0, 0.2), 2);
        assert_eq!(neighborhood_count(&b2(0.1), 0, 0.05), 1);
        assert_eq!(neighborhood_count(&b2(0.1), 0, 0.1), 2);
        assert_eq!(neighborhood_count_scaled(&b2(0.1), 0, 0.1, 2.0), 1);
    }

    #[test]
    fn distance_examples() {
        let p = BernoulliVector { p: vec![0.3] };
        let q = BernoulliVector { p: vec![0.8] };
        assert!((distance(DistanceFamily::MeanDistance, &p, &q).unwrap() - 0.5).abs() < 1e-15);
        assert_eq!(distance(DistanceFamily::TotalVariation, &p, &p).unwrap(), 0.0);
        assert!((distance(DistanceFamily::TotalVariation, &p, &q).unwrap() - 0.5).abs() < 1e-15);
        let w = distance(DistanceFamily::Wasserstein1, &emp(&[0.0, 1.0]), &emp(&[1.0, 2.0])).unwrap();
        assert!((w - 1.0).abs() < 1e-15);
    }

    #[test]
    fn wasserstein_rejects_higher_dimensions() {
        let p = BernoulliVector { p: vec![0.3, 0.2] };
        assert!(matches!(
            distance(DistanceFamily::Wasserstein1, &p, &p),
            Err(Error::Unsupported(_))
        ));
        let g = GaussianVector { mean: vec![0.0], std: 1.0 };
        assert!(distance(DistanceFamily::TotalVariation, &g, &g).is_err());
    }

    #[test]
    fn conversion_examples() {
        let dhat = DMatrix::from_row_slice(2, 2, &[0.0, 0.5, 0.5, 0.0]);
        let c = bias_from_distance(&dhat, 2.0, None).unwrap();
        assert_eq!(c.function_gap.get(0, 1), 1.0);
        assert_eq!(c.gradient_gap.get(0, 1), 0.25);
        let c = bias_from_distance(&dhat, 2.0, Some(1.0)).unwrap();
        assert_eq!(c.function_gap.get(0, 1), 0.125);
        assert!(bias_from_distance(&dhat, 2.0, Some(0.0)).is_err());
        let z = bias_from_distance(&DMatrix::zeros(3, 3), 1.0, None).unwrap();
        assert_eq!(z.function_gap.entries().max(), 0.0);
    }

    #[test]
    fn quadratic_bias_examples() {
        let b = quadratic_bias(&[DVector::from_element(1, 0.0), DVector::from_element(1, 1.0)]).unwrap();
        assert_eq!(b.get(0, 1), 0.5);
        let same = vec![DVector::from_element(2, 0.4); 3];
        assert_eq!(quadratic_bias(&same).unwrap().entries().max(), 0.0);
        // squared distances on a line break the triangle inequality
        let line: Vec<_> = [0.0, 0.5, 1.0].iter().map(|v| DVector::from_element(1, *v)).collect();
        assert!(!quadratic_bias(&line).unwrap().triangle());
    }

    #[test]
    fn noisy_bias_examples() {
        let p = [0.1, 0.5, 0.9];
        let clean = quadratic_bias(&p.iter().map(|v| DVector::from_element(1, *v)).collect::<Vec<_>>()).unwrap();
        let zero = noisy_bias(&p, 0.0, &mut RngStream::domain(3, Domain::BiasNoise)).unwrap();
        assert_eq!(zero, clean);
        let a = noisy_bias(&p, 0.5, &mut RngStream::domain(3, Domain::BiasNoise)).unwrap();
        let b = noisy_bias(&p, 0.5, &mut RngStream::domain(3, Domain::BiasNoise)).unwrap();
        assert_eq!(a, b);
        assert!(a.is_symmetric());
    }

    #[test]
    fn csv_round_trip() {
        let mut e = DMatrix::from_row_slice(3, 3, &[0.0, 0.25, 1.5, 0.25, 0.0, 2.0, 1.5, 2.0, 0.0]);
        e[(0, 2)] = f64::INFINITY;
        let b = BiasMatrix::function_gap(e).unwrap();
        let mut buf = Vec::new();
        b.write_csv(&mut buf).unwrap();
        assert!(String::from_utf8_lossy(&buf).starts_with("n=3\n"));
        let back = BiasMatrix::read_csv(buf.as_slice(), BiasFlavor::FunctionGap).unwrap();
        assert_eq!(back, b);
    }

    #[test]
    fn invalid_matrices_rejected() {
        assert!(BiasMatrix::function_gap(DMatrix::from_row_slice(2, 2, &[0.1, 0.0, 0.0, 0.0])).is_err());
        assert!(BiasMatrix::function_gap(DMatrix::from_row_slice(2, 2, &[0.0, -1.0, 0.0, 0.0])).is_err());
        assert!(BiasMatrix::read_csv("n=2\n0,1\n".as_bytes(), BiasFlavor::FunctionGap).is_err());
    }

    #[test]
    fn identical_problems_validate_with_zero_bias() {
        let p = AgentProblem::mean_estimation(BernoulliVector { p: vec![0.2, 0.6] }).unwrap();
        let problems = vec![p.clone(), p.clone(), p];
        let grid = ball_grid(2, 1.0, 50, 1);
        let lambdas = random_simplex(3, 10, 1);
        for flavor in [
            BiasFlavor::FunctionGap,
            BiasFlavor::GradientGap,
            BiasFlavor::Dissimilarity { m: 0.0 },
        ] {
            let b = BiasMatrix::zeros(3).with_flavor(flavor);
            let r = validate_assumptions(&problems, &b, &grid, &lambdas).unwrap();
            assert!(r.passes(1e-15), "{flavor:?}: {}", r.worst());
        }
    }

    #[test]
    fn missing_minimizer_skips_function_gap() {
        let d = Empirical {
            samples: vec![DVector::from_vec(vec![1.0, 1.0])],
        };
        let p = AgentProblem::new(crate::problem::LossKind::Hinge, d).unwrap();
        let r = validate_assumptions(&[p.clone(), p], &BiasMatrix::zeros(2), &[], &[]).unwrap();
        assert!(r.function_gap_skipped);
        assert!(r.function_gap.is_none());
    }

    #[test]
    fn grid_points_lie_in_ball() {
        for x in ball_grid(3, 2.0, 200, 4) {
            assert!(x.norm() <= 2.0);
        }
        for l in random_simplex(5, 20, 4) {
            assert!((l.sum() - 1.0).abs() < 1e-12 && l.min() >= 0.0);
        }
    }
}
