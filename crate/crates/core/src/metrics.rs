//! Error functionals, run records, the surrogate problem `f^Λ(y) = f̄(Λy)`
//! and the bias term `(1/N) Σ_ij λ_ij b_ij`.

use std::io::Write;
use std::path::Path;

use nalgebra::{DMatrix, DVector};

use crate::error::{check_dim, Error, Result};
use crate::problem::{AgentProblem, Point};
use crate::similarity::BiasMatrix;

pub const RECORD_HEADER: [&str; 7] = [
    "round",
    "samples_total",
    "avg_error",
    "max_error",
    "eps_stage",
    "algo",
    "seed",
];

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct RecordRow {
    pub round: u64,
    pub samples_total: u64,
    pub avg_error: f64,
    pub max_error: f64,
    pub eps_stage: f64,
}

/// Error time series of one run. `samples_total` is strictly increasing.
#[derive(Clone, Debug, PartialEq)]
pub struct RunRecord {
    pub algo: String,
    pub seed: u64,
    rows: Vec<RecordRow>,
}

impl RunRecord {
    pub fn new(algo: impl Into<String>, seed: u64) -> Self {
        Self {
            algo: algo.into(),
            seed,
            rows: Vec::new(),
        }
    }

    /// Rows that do not advance `samples_total` are dropped.
    pub fn push(&mut self, row: RecordRow) {
        debug_assert!(row.avg_error <= row.max_error + 1e-15);
        if self.rows.last().is_none_or(|last| row.samples_total > last.samples_total) {
            self.rows.push(row);
        }
    }

    pub fn rows(&self) -> &[RecordRow] {
        &self.rows
    }

    pub fn last(&self) -> Option<&RecordRow> {
        self.rows.last()
    }

    pub fn write_csv<W: Write>(&self, w: W) -> Result<()> {
        let mut out = csv::Writer::from_writer(w);
        out.write_record(RECORD_HEADER)?;
        for r in &self.rows {
            out.write_record([
                r.round.to_string(),
                r.samples_total.to_string(),
                r.avg_error.to_string(),
                r.max_error.to_string(),
                r.eps_stage.to_string(),
                self.algo.clone(),
                self.seed.to_string(),
            ])?;
        }
        out.flush()?;
        Ok(())
    }

    pub fn write_file(&self, path: impl AsRef<Path>) -> Result<()> {
        self.write_csv(std::io::BufWriter::new(std::fs::File::create(path)?))
    }

    pub fn read_csv<R: std::io::Read>(r: R) -> Result<Self> {
        let mut rdr = csv::Reader::from_reader(r);
        let mut record: Option<RunRecord> = None;
        for rec in rdr.records() {
            let rec = rec?;
            let field = |k: usize| -> Result<&str> {
                rec.get(k).ok_or_else(|| Error::invalid("record csv", "short row"))
            };
            let num = |k: usize| -> Result<f64> {
                field(k)?
                    .parse()
                    .map_err(|_| Error::invalid("record csv", format!("bad number in column {k}")))
            };
            let out = record.get_or_insert_with(|| RunRecord::new(rec.get(5).unwrap_or(""), 0));
            out.seed = field(6)?
                .parse()
                .map_err(|_| Error::invalid("record csv", "bad seed"))?;
            out.push(RecordRow {
                round: num(0)? as u64,
                samples_total: num(1)? as u64,
                avg_error: num(2)?,
                max_error: num(3)?,
                eps_stage: num(4)?,
            });
        }
        record.ok_or_else(|| Error::invalid("record csv", "no rows"))
    }
}

/// `(F, max_i gap)` with `F = (1/N) Σ_i f_i(x_i) − f_i(x_i^⋆)`.
pub fn averaged_error(iterates: &[Point], problems: &[AgentProblem]) -> Result<(f64, f64)> {
    check_dim(problems.len(), iterates.len())?;
    let gaps = iterates
        .iter()
        .zip(problems)
        .enumerate()
        .map(|(i, (x, p))| agent_gap(p, i, x))
        .collect::<Result<Vec<f64>>>()?;
    Ok(summarize(&gaps))
}

fn agent_gap(p: &AgentProblem, i: usize, x: &Point) -> Result<f64> {
    p.excess(x).map_err(|e| match e {
        Error::MissingOptimum(_) => Error::MissingOptimum(i),
        other => other,
    })
}

fn summarize(gaps: &[f64]) -> (f64, f64) {
    let sum: f64 = gaps.iter().sum();
    let max = gaps.iter().copied().fold(0.0, f64::max);
    (sum / gaps.len() as f64, max)
}

/// Incremental version of [`averaged_error`]: only agents whose iterate
/// moved are re-evaluated, and the summary is bitwise equal to the offline
/// computation.
#[derive(Clone, Debug)]
pub struct ErrorTracker {
    gaps: Vec<f64>,
}

impl ErrorTracker {
    pub fn new(iterates: &[Point], problems: &[AgentProblem]) -> Result<Self> {
        check_dim(problems.len(), iterates.len())?;
        let gaps = iterates
            .iter()
            .zip(problems)
            .enumerate()
            .map(|(i, (x, p))| agent_gap(p, i, x))
            .collect::<Result<Vec<f64>>>()?;
        Ok(Self { gaps })
    }

    pub fn update(&mut self, i: usize, x: &Point, problem: &AgentProblem) -> Result<()> {
        self.gaps[i] = agent_gap(problem, i, x)?;
        Ok(())
    }

    pub fn summary(&self) -> (f64, f64) {
        summarize(&self.gaps)
    }

    pub fn gaps(&self) -> &[f64] {
        &self.gaps
    }
}

/// `(1/N) Σ_ij λ_ij b_ij`; zero weights never pick up infinite biases.
pub fn bias_term(lambda: &DMatrix<f64>, b: &BiasMatrix) -> Result<f64> {
    let n = b.n();
    check_dim(n, lambda.nrows())?;
    check_dim(n, lambda.ncols())?;
    let mut total = 0.0;
    for i in 0..n {
        for j in 0..n {
            if lambda[(i, j)] != 0.0 {
                total += lambda[(i, j)] * b.get(i, j);
            }
        }
    }
    Ok(total / n as f64)
}

/// `f̄(x) = (1/N) Σ_i f_i(x_i)`
pub fn mean_objective(problems: &[AgentProblem], x: &[Point]) -> Result<f64> {
    check_dim(problems.len(), x.len())?;
    let mut total = 0.0;
    for (p, xi) in problems.iter().zip(x) {
        total += p.true_objective(xi)?;
    }
    Ok(total / problems.len() as f64)
}

#[derive(Clone, Debug)]
pub struct SurrogateSolution {
    /// `x^Λ = Λ y^Λ`, one row per agent.
    pub x_lambda: Vec<Point>,
    pub y: Vec<Point>,
    /// `f^Λ(y^Λ) = f̄(x^Λ)`
    pub value: f64,
    /// `‖∇_y f^Λ(y^Λ)‖`
    pub residual: f64,
    /// Numeric solve ended above the residual target.
    pub flagged: bool,
}

/// `(Λ ⊗ I_d) y`
pub fn apply_lambda(lambda: &DMatrix<f64>, y: &[Point]) -> Vec<Point> {
    let n = lambda.nrows();
    (0..n)
        .map(|i| {
            let mut acc = DVector::zeros(y[0].len());
            for (j, yj) in y.iter().enumerate() {
                let l = lambda[(i, j)];
                if l != 0.0 {
                    acc.axpy(l, yj, 1.0);
                }
            }
            acc
        })
        .collect()
}

/// `(Λᵀ ⊗ I_d) g`
pub fn apply_lambda_t(lambda: &DMatrix<f64>, g: &[Point]) -> Vec<Point> {
    let n = lambda.ncols();
    (0..n)
        .map(|l| {
            let mut acc = DVector::zeros(g[0].len());
            for (j, gj) in g.iter().enumerate() {
                let v = lambda[(j, l)];
                if v != 0.0 {
                    acc.axpy(v, gj, 1.0);
                }
            }
            acc
        })
        .collect()
}

/// `∇_y f^Λ(y) = (1/N) Λᵀ (∇f_j((Λy)_j))_j`
pub fn surrogate_gradient(problems: &[AgentProblem], lambda: &DMatrix<f64>, y: &[Point]) -> Result<Vec<Point>> {
    let x = apply_lambda(lambda, y);
    let grads = problems
        .iter()
        .zip(&x)
        .map(|(p, xj)| p.expected_gradient(xj))
        .collect::<Result<Vec<_>>>()?;
    let n = problems.len() as f64;
    Ok(apply_lambda_t(lambda, &grads).into_iter().map(|g| g / n).collect())
}

fn block_norm(v: &[Point]) -> f64 {
    v.iter().map(|p| p.norm_squared()).sum::<f64>().sqrt()
}

/// Minimizer of `y ↦ f̄(Λy)`: normal equations when every agent is
/// quadratic, gradient descent otherwise.
pub fn surrogate(problems: &[AgentProblem], lambda: &DMatrix<f64>) -> Result<SurrogateSolution> {
    check_rows(problems, lambda)?;
    if problems.iter().all(|p| p.quadratic_form().is_some()) {
        surrogate_closed_form(problems, lambda)
    } else {
        let l = problems
            .iter()
            .map(|p| p.smoothness())
            .try_fold(0.0f64, |acc, s| s.map(|v| acc.max(v)))
            .ok_or(Error::MissingConstant("L"))?;
        let w = lambda * lambda.transpose();
        let rho = w.symmetric_eigenvalues().max().max(f64::MIN_POSITIVE);
        surrogate_numeric(problems, lambda, l * rho / problems.len() as f64, 1_000_000)
    }
}

fn check_rows(problems: &[AgentProblem], lambda: &DMatrix<f64>) -> Result<()> {
    let n = problems.len();
    check_dim(n, lambda.nrows())?;
    check_dim(n, lambda.ncols())?;
    for i in 0..n {
        if (lambda.row(i).sum() - 1.0).abs() > 1e-12 || lambda.row(i).iter().any(|v| *v < 0.0) {
            return Err(Error::invalid("lambda", format!("row {i} is not stochastic")));
        }
    }
    let d = problems[0].dim();
    for p in problems {
        check_dim(d, p.dim())?;
    }
    Ok(())
}

/// Solve `(Λ⊗I)ᵀ A (Λ⊗I) y = (Λ⊗I)ᵀ c`, minimum-norm in `y`.
pub fn surrogate_closed_form(problems: &[AgentProblem], lambda: &DMatrix<f64>) -> Result<SurrogateSolution> {
    check_rows(problems, lambda)?;
    let n = problems.len();
    let d = problems[0].dim();
    let mut a = DMatrix::zeros(n * d, n * d);
    let mut c = DVector::zeros(n * d);
    for (j, p) in problems.iter().enumerate() {
        let (aj, cj) = p
            .quadratic_form()
            .ok_or(Error::NumericOnly("closed-form surrogate needs quadratic agents"))?;
        a.view_mut((j * d, j * d), (d, d)).copy_from(&aj);
        c.rows_mut(j * d, d).copy_from(&cj);
    }
    let kron = lambda.kronecker(&DMatrix::<f64>::identity(d, d));
    let h = kron.transpose() * &a * &kron;
    let rhs = kron.transpose() * &c;
    let y_flat = crate::linalg::psd_solve(&h, &rhs);
    let y: Vec<Point> = (0..n).map(|j| y_flat.rows(j * d, d).clone_owned()).collect();
    finish(problems, lambda, y, false)
}

/// Gradient descent on `f^Λ` with step `1/(2L̄)`, stopping once the gradient
/// norm drops below `1e-12` or after `budget` iterations. Results with a
/// residual above `1e-6` are flagged.
pub fn surrogate_numeric(
    problems: &[AgentProblem],
    lambda: &DMatrix<f64>,
    smoothness: f64,
    budget: usize,
) -> Result<SurrogateSolution> {
    check_rows(problems, lambda)?;
    if !(smoothness > 0.0) {
        return Err(Error::invalid("smoothness", "must be > 0"));
    }
    let d = problems[0].dim();
    let step = 1.0 / (2.0 * smoothness);
    let mut y = vec![DVector::zeros(d); problems.len()];
    for _ in 0..budget {
        let g = surrogate_gradient(problems, lambda, &y)?;
        if block_norm(&g) <= 1e-12 {
            break;
        }
        for (yl, gl) in y.iter_mut().zip(&g) {
            yl.axpy(-step, gl, 1.0);
        }
    }
    finish(problems, lambda, y, true)
}

fn finish(problems: &[AgentProblem], lambda: &DMatrix<f64>, y: Vec<Point>, numeric: bool) -> Result<SurrogateSolution> {
    let x_lambda = apply_lambda(lambda, &y);
    let value = mean_objective(problems, &x_lambda)?;
    let residual = block_norm(&surrogate_gradient(problems, lambda, &y)?);
    let flagged = numeric && residual > 1e-6;
    if flagged {
        log::warn!("surrogate solve stopped at residual {residual:.3e}");
    }
    Ok(SurrogateSolution {
        x_lambda,
        y,
        value,
        residual,
        flagged,
    })
}
