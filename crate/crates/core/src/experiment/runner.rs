use std::fs;
use std::path::{Path, PathBuf};

use nalgebra::DVector;

use super::config::{Algo, BiasSource, DistributionSpec, ExperimentConfig, ExperimentLoss};
use super::plot::{render_svg, Series};
use crate::algorithms::{afa, afa_adaptive, naive_parallel, RunOptions, Trajectory};
use crate::error::{Error, Result};
use crate::exec::Execution;
use crate::metrics::RecordRow;
use crate::mixing::{adaptive_schedule, build_mixing, inverse_cluster_sum};
use crate::oracle::OracleKind;
use crate::problem::{AgentDistribution, AgentProblem, LossKind, Point};
use crate::rng::{Domain, RngStream};
use crate::similarity::{noisy_bias, BiasFlavor, BiasMatrix};

/// Agents of one seed.
#[derive(Clone, Debug)]
pub struct SeedInstance {
    pub seed: u64,
    pub problems: Vec<AgentProblem>,
    pub optima: Vec<Point>,
    /// `(1/N) Σ_i f_i(x̄^⋆) − f_i(x_i^⋆)`: the error floor of one shared model.
    pub plateau: f64,
}

fn loss_scale(loss: ExperimentLoss, dim: usize) -> f64 {
    match loss {
        ExperimentLoss::MeanEstimation => 1.0,
        ExperimentLoss::QuadraticHard => 1.0 / dim as f64,
    }
}

pub fn build_instance(cfg: &ExperimentConfig, seed: u64) -> Result<SeedInstance> {
    let mut stream = RngStream::domain(seed, Domain::Instance);
    let (n, dim) = (cfg.n_agents, cfg.dim);
    let mut problems = Vec::with_capacity(n);
    for _ in 0..n {
        let m: Vec<f64> = (0..dim).map(|_| stream.uniform()).collect();
        let dist = match cfg.distribution {
            DistributionSpec::BernoulliUniform => AgentDistribution::BernoulliVector { p: m },
            DistributionSpec::GaussianUniform { std } => AgentDistribution::GaussianVector { mean: m, std },
        };
        let loss = match cfg.loss {
            ExperimentLoss::MeanEstimation => LossKind::MeanEstimation,
            ExperimentLoss::QuadraticHard => LossKind::QuadraticHard,
        };
        problems.push(AgentProblem::new(loss, dist)?);
    }
    let optima: Vec<Point> = problems
        .iter()
        .enumerate()
        .map(|(i, p)| p.minimizer().cloned().ok_or(Error::MissingOptimum(i)))
        .collect::<Result<_>>()?;
    let centre = optima.iter().fold(DVector::zeros(dim), |acc, p| acc + p) / n as f64;
    let plateau = loss_scale(cfg.loss, dim) * optima.iter().map(|p| 0.5 * (p - &centre).norm_squared()).sum::<f64>()
        / n as f64;
    Ok(SeedInstance {
        seed,
        problems,
        optima,
        plateau,
    })
}

/// One bias matrix an algorithm can be run against.
#[derive(Clone, Debug)]
pub struct BiasLevel {
    pub noise: Option<f64>,
    pub bias: BiasMatrix,
}

pub fn bias_levels(cfg: &ExperimentConfig, inst: &SeedInstance) -> Result<Vec<BiasLevel>> {
    let scale = loss_scale(cfg.loss, cfg.dim);
    let exact = |points: &[Point]| {
        let n = points.len();
        BiasMatrix::function_gap(nalgebra::DMatrix::from_fn(n, n, |i, j| {
            scale * 0.5 * (&points[i] - &points[j]).norm_squared()
        }))
    };
    match &cfg.bias {
        BiasSource::Exact => Ok(vec![BiasLevel {
            noise: None,
            bias: exact(&inst.optima)?,
        }]),
        BiasSource::Noisy(amps) => {
            let p: Vec<f64> = inst.optima.iter().map(|v| v[0]).collect();
            amps.iter()
                .map(|&a| {
                    // one stream per seed: every amplitude scales the same draws
                    let mut s = RngStream::domain(inst.seed, Domain::BiasNoise);
                    let b = noisy_bias(&p, a, &mut s)?;
                    Ok(BiasLevel {
                        noise: Some(a),
                        bias: BiasMatrix::function_gap(b.entries() * scale)?,
                    })
                })
                .collect()
        }
        BiasSource::File(path) => {
            let bias = BiasMatrix::read_file(path, BiasFlavor::FunctionGap)?;
            if bias.n() != cfg.n_agents {
                return Err(Error::config(
                    "bias",
                    format!("{} holds {} agents, config has {}", path.display(), bias.n(), cfg.n_agents),
                ));
            }
            Ok(vec![BiasLevel { noise: None, bias }])
        }
    }
}

/// `η = 2ND² / (K B² Σ_i 1/N_i^ε(2b))` over the whole horizon `K`.
pub fn fixed_step(b: &BiasMatrix, eps: f64, diameter: f64, bound: f64, rounds: u64) -> f64 {
    let n = b.n() as f64;
    2.0 * n * diameter * diameter / (rounds.max(1) as f64 * bound * bound * inverse_cluster_sum(b, eps))
}

#[derive(Clone, Debug, PartialEq)]
pub struct RunOutcome {
    pub algo: Algo,
    pub tag: String,
    pub seed: u64,
    pub noise: Option<f64>,
    pub final_row: RecordRow,
    /// `(samples_total, avg_error, max_error)` at the summary checkpoints.
    pub series: Vec<(u64, f64, f64)>,
    pub beyond_schedule: bool,
}

#[derive(Clone, Debug, PartialEq)]
pub struct SummaryRow {
    pub tag: String,
    pub samples_total: u64,
    pub mean_avg_error: f64,
    /// Sample standard deviation over seeds; 0 for a single seed.
    pub std_avg_error: f64,
    pub mean_max_error: f64,
    pub seeds: usize,
}

pub const SUMMARY_HEADER: &str = "algo,samples_total,mean_avg_error,std_avg_error,mean_max_error,seeds";

#[derive(Clone, Debug)]
pub struct ExperimentReport {
    pub runs: Vec<RunOutcome>,
    pub summary: Vec<SummaryRow>,
    /// Per seed, in config order.
    pub plateaus: Vec<(u64, f64)>,
    pub out_dir: Option<PathBuf>,
}

impl ExperimentReport {
    pub fn tags(&self) -> Vec<String> {
        let mut tags: Vec<String> = Vec::new();
        for r in &self.runs {
            if !tags.contains(&r.tag) {
                tags.push(r.tag.clone());
            }
        }
        tags
    }

    /// Final average errors of `tag`, in seed order.
    pub fn finals(&self, tag: &str) -> Vec<f64> {
        self.runs.iter().filter(|r| r.tag == tag).map(|r| r.final_row.avg_error).collect()
    }

    pub fn mean_final(&self, tag: &str) -> Option<f64> {
        let v = self.finals(tag);
        (!v.is_empty()).then(|| v.iter().sum::<f64>() / v.len() as f64)
    }

    pub fn mean_plateau(&self) -> f64 {
        self.plateaus.iter().map(|p| p.1).sum::<f64>() / self.plateaus.len().max(1) as f64
    }

    pub fn summary_of(&self, tag: &str) -> Vec<&SummaryRow> {
        self.summary.iter().filter(|r| r.tag == tag).collect()
    }
}

pub fn run_tag(algo: Algo, noise: Option<f64>) -> String {
    match noise {
        Some(a) => format!("{}_noise{a}", algo.name()),
        None => algo.name().to_string(),
    }
}

/// Log-spaced sample counts from `first` to `last`, both included.
pub fn checkpoints(first: u64, last: u64, count: usize) -> Vec<u64> {
    let first = first.max(1).min(last);
    if count < 2 || first == last {
        return vec![last];
    }
    let (lo, hi) = ((first as f64).ln(), (last as f64).ln());
    let mut out: Vec<u64> = (0..count)
        .map(|k| (lo + (hi - lo) * k as f64 / (count - 1) as f64).exp().round() as u64)
        .map(|c| c.clamp(first, last))
        .collect();
    out.dedup();
    if out.last() != Some(&last) {
        out.push(last);
    }
    out
}

struct Job<'a> {
    inst: &'a SeedInstance,
    level: Option<&'a BiasLevel>,
    algo: Algo,
}

fn run_job(cfg: &ExperimentConfig, job: &Job<'_>, out: Option<&Path>, grid: &[u64]) -> Result<RunOutcome> {
    let inst = job.inst;
    let n = cfg.n_agents;
    let rounds = cfg.rounds();
    let noise = job.level.and_then(|l| l.noise);
    let tag = run_tag(job.algo, noise);
    let opts = RunOptions::new(inst.seed, cfg.oracle, rounds)
        .with_exec(Execution::Sequential)
        .log_every(cfg.effective_log_every())
        .tagged(tag.clone());
    let (d, bnd) = (cfg.diameter, cfg.grad_bound);
    let bias = || job.level.map(|l| &l.bias).ok_or_else(|| Error::invalid("bias", "missing"));
    let eps = || cfg.eps.ok_or_else(|| Error::config("eps", "required by fixed-eps algorithms"));
    let traj: Trajectory = match job.algo {
        Algo::AfaAdaptive => afa_adaptive(&inst.problems, &adaptive_schedule(bias()?, d, bnd, rounds)?, &opts)?,
        Algo::Afa if cfg.adaptive => afa_adaptive(&inst.problems, &adaptive_schedule(bias()?, d, bnd, rounds)?, &opts)?,
        Algo::Afa => {
            let (b, eps) = (bias()?, eps()?);
            let plan = build_mixing(b, eps)?;
            if let Some(dir) = out {
                let file = fs::File::create(dir.join("plans").join(format!("{tag}_seed{}.csv", inst.seed)))?;
                plan.write_csv(std::io::BufWriter::new(file))?;
            }
            let eta = cfg.step.unwrap_or_else(|| fixed_step(b, eps, d, bnd, rounds));
            afa(&inst.problems, &plan, eta, &opts)?
        }
        Algo::NaiveParallel => {
            let (b, eps) = (bias()?, eps()?);
            let eta = cfg.step.unwrap_or_else(|| fixed_step(b, eps, d, bnd, rounds));
            naive_parallel(&inst.problems, b, eps, eta, &opts)?
        }
        Algo::Local => afa_adaptive(&inst.problems, &adaptive_schedule(&BiasMatrix::isolated(n), d, bnd, rounds)?, &opts)?,
        Algo::SingleModel => afa_adaptive(&inst.problems, &adaptive_schedule(&BiasMatrix::zeros(n), d, bnd, rounds)?, &opts)?,
    };
    let record = traj.record.ok_or_else(|| Error::invalid("log_every", "run kept no record"))?;
    if let Some(dir) = out {
        record.write_file(dir.join("runs").join(format!("{tag}_seed{}.csv", inst.seed)))?;
    }
    let rows = record.rows();
    let final_row = *rows.last().ok_or_else(|| Error::invalid("samples_per_agent", "run kept no rows"))?;
    let mut series = Vec::with_capacity(grid.len());
    let mut at = 0usize;
    for &c in grid {
        while at < rows.len() && rows[at].samples_total <= c {
            at += 1;
        }
        if at > 0 {
            let r = &rows[at - 1];
            series.push((c, r.avg_error, r.max_error));
        }
    }
    Ok(RunOutcome {
        algo: job.algo,
        tag,
        seed: inst.seed,
        noise,
        final_row,
        series,
        beyond_schedule: traj.beyond_schedule,
    })
}

fn summarize(runs: &[RunOutcome], tags: &[String]) -> Vec<SummaryRow> {
    let mut out = Vec::new();
    for tag in tags {
        let mine: Vec<&RunOutcome> = runs.iter().filter(|r| &r.tag == tag).collect();
        // checkpoints every run reached
        let shared: Vec<u64> = mine[0]
            .series
            .iter()
            .map(|s| s.0)
            .filter(|c| mine.iter().all(|r| r.series.iter().any(|s| s.0 == *c)))
            .collect();
        for c in shared {
            let vals: Vec<(f64, f64)> = mine
                .iter()
                .map(|r| {
                    let s = r.series.iter().find(|s| s.0 == c).expect("shared checkpoint");
                    (s.1, s.2)
                })
                .collect();
            let k = vals.len() as f64;
            let mean = vals.iter().map(|v| v.0).sum::<f64>() / k;
            let var = if vals.len() > 1 {
                vals.iter().map(|v| (v.0 - mean).powi(2)).sum::<f64>() / (k - 1.0)
            } else {
                0.0
            };
            out.push(SummaryRow {
                tag: tag.clone(),
                samples_total: c,
                mean_avg_error: mean,
                std_avg_error: var.sqrt(),
                mean_max_error: vals.iter().map(|v| v.1).sum::<f64>() / k,
                seeds: vals.len(),
            });
        }
    }
    out
}

pub fn write_summary(rows: &[SummaryRow], path: impl AsRef<Path>) -> Result<()> {
    let mut text = String::from(SUMMARY_HEADER);
    text.push('\n');
    for r in rows {
        text.push_str(&format!(
            "{},{},{:e},{:e},{:e},{}\n",
            r.tag, r.samples_total, r.mean_avg_error, r.std_avg_error, r.mean_max_error, r.seeds
        ));
    }
    fs::write(path, text)?;
    Ok(())
}

/// Every `(algorithm, seed, bias level)` run of the config. Runs are
/// spread over `exec`; each run is itself sequential, so the outputs do not
/// depend on the mode. With `out` set, per-run records, bias matrices,
/// fixed plans, `summary.csv` and `errors.svg` are written there.
pub fn run_experiment(cfg: &ExperimentConfig, out: Option<&Path>, exec: Execution) -> Result<ExperimentReport> {
    cfg.check()?;
    if let Some(dir) = out {
        for sub in ["runs", "bias", "plans"] {
            fs::create_dir_all(dir.join(sub))?;
        }
    }
    let instances: Vec<SeedInstance> = cfg
        .seeds
        .iter()
        .map(|&s| build_instance(cfg, s))
        .collect::<Result<_>>()?;
    let levels: Vec<Vec<BiasLevel>> = instances.iter().map(|i| bias_levels(cfg, i)).collect::<Result<_>>()?;
    if let Some(dir) = out {
        for (inst, lv) in instances.iter().zip(&levels) {
            for l in lv {
                let name = match l.noise {
                    Some(a) => format!("seed{}_noise{a}.csv", inst.seed),
                    None => format!("seed{}.csv", inst.seed),
                };
                l.bias.write_file(dir.join("bias").join(name))?;
            }
        }
    }
    let mut jobs = Vec::new();
    for (inst, lv) in instances.iter().zip(&levels) {
        for &algo in &cfg.algorithms {
            if algo.uses_bias() {
                jobs.extend(lv.iter().map(|l| Job {
                    inst,
                    level: Some(l),
                    algo,
                }));
            } else {
                jobs.push(Job { inst, level: None, algo });
            }
        }
    }
    let per_round = match cfg.oracle {
        OracleKind::Asynchronous => 1,
        OracleKind::Synchronous => cfg.n_agents as u64,
    };
    let total = cfg.rounds() * per_round;
    let grid = checkpoints(per_round * cfg.effective_log_every(), total, cfg.checkpoints);
    let runs: Vec<RunOutcome> = exec
        .map_slice(&jobs, |job| run_job(cfg, job, out, &grid))
        .into_iter()
        .collect::<Result<_>>()?;
    for r in runs.iter().filter(|r| r.beyond_schedule) {
        log::warn!("{} seed {} outlived its schedule", r.tag, r.seed);
    }
    let mut tags: Vec<String> = Vec::new();
    for r in &runs {
        if !tags.contains(&r.tag) {
            tags.push(r.tag.clone());
        }
    }
    let summary = summarize(&runs, &tags);
    if let Some(dir) = out {
        write_summary(&summary, dir.join("summary.csv"))?;
        let series: Vec<Series> = tags
            .iter()
            .map(|t| Series {
                label: t.clone(),
                points: summary
                    .iter()
                    .filter(|r| &r.tag == t)
                    .map(|r| (r.samples_total as f64, r.mean_avg_error))
                    .collect(),
            })
            .collect();
        fs::write(dir.join("errors.svg"), render_svg(&series, "samples", "average error"))?;
    }
    Ok(ExperimentReport {
        runs,
        summary,
        plateaus: instances.iter().map(|i| (i.seed, i.plateau)).collect(),
        out_dir: out.map(Path::to_path_buf),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small() -> ExperimentConfig {
        ExperimentConfig {
            n_agents: 6,
            samples_per_agent: 40,
            seeds: vec![3, 4],
            algorithms: vec![Algo::Afa, Algo::Local, Algo::SingleModel, Algo::NaiveParallel],
            eps: Some(0.05),
            ..ExperimentConfig::default()
        }
    }

    #[test]
    fn checkpoints_are_increasing_and_end_at_total() {
        let c = checkpoints(1, 1000, 10);
        assert_eq!(c[0], 1);
        assert_eq!(*c.last().unwrap(), 1000);
        assert!(c.windows(2).all(|w| w[0] < w[1]));
        assert_eq!(checkpoints(5, 5, 10), vec![5]);
    }

    #[test]
    fn every_run_reports_the_full_budget() {
        let cfg = small();
        let rep = run_experiment(&cfg, None, Execution::Sequential).unwrap();
        assert_eq!(rep.runs.len(), 2 * 4);
        for r in &rep.runs {
            assert_eq!(r.final_row.samples_total, 240);
            assert_eq!(r.series.last().unwrap().0, 240);
        }
        assert_eq!(rep.tags(), vec!["afa", "local", "single_model", "naive_parallel"]);
        assert!(rep.summary.iter().all(|s| s.seeds == 2));
    }

    #[test]
    fn modes_give_identical_reports() {
        let cfg = small();
        let a = run_experiment(&cfg, None, Execution::Sequential).unwrap();
        let b = run_experiment(&cfg, None, Execution::Parallel).unwrap();
        assert_eq!(a.runs, b.runs);
        assert_eq!(a.summary, b.summary);
    }

    #[test]
    fn single_agent_algorithms_coincide() {
        let cfg = ExperimentConfig {
            n_agents: 1,
            algorithms: vec![Algo::Afa, Algo::Local, Algo::SingleModel],
            ..small()
        };
        let rep = run_experiment(&cfg, None, Execution::Sequential).unwrap();
        for seed in [3, 4] {
            let finals: Vec<&RecordRow> = rep.runs.iter().filter(|r| r.seed == seed).map(|r| &r.final_row).collect();
            assert!(finals.windows(2).all(|w| w[0].avg_error == w[1].avg_error));
        }
    }

    #[test]
    fn noisy_levels_share_offsets() {
        let cfg = ExperimentConfig {
            bias: BiasSource::Noisy(vec![0.0, 0.1, 0.2]),
            ..small()
        };
        let inst = build_instance(&cfg, 9).unwrap();
        let lv = bias_levels(&cfg, &inst).unwrap();
        let exact = bias_levels(&ExperimentConfig::default(), &inst).unwrap();
        assert_eq!(lv[0].bias.entries(), exact[0].bias.entries());
        // offsets scale linearly: n_i(0.2) = 2 n_i(0.1)
        let p: Vec<f64> = inst.optima.iter().map(|v| v[0]).collect();
        let root = |b: &BiasMatrix| (2.0 * b.get(0, 1)).sqrt() * (p[0] - p[1]).signum();
        let d1 = root(&lv[1].bias) - (p[0] - p[1]);
        let d2 = root(&lv[2].bias) - (p[0] - p[1]);
        assert!((d2 - 2.0 * d1).abs() < 1e-9, "{d1} {d2}");
    }

    #[test]
    fn outputs_are_written_and_deterministic() {
        let cfg = ExperimentConfig {
            adaptive: false,
            ..small()
        };
        let a = tempfile::tempdir().unwrap();
        let b = tempfile::tempdir().unwrap();
        run_experiment(&cfg, Some(a.path()), Execution::Parallel).unwrap();
        run_experiment(&cfg, Some(b.path()), Execution::Sequential).unwrap();
        for rel in ["summary.csv", "errors.svg", "runs/afa_seed3.csv", "bias/seed4.csv", "plans/afa_seed3.csv"] {
            let x = fs::read(a.path().join(rel)).unwrap();
            assert_eq!(x, fs::read(b.path().join(rel)).unwrap(), "{rel}");
        }
    }
}
