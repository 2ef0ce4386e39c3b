use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Parser, Subcommand};

use allforall::experiment::{all_green, bound_table, run_experiment, validate_config, ExperimentConfig};
use allforall::Execution;

/// Output directory used when neither `--out` nor the config sets one.
const FALLBACK_OUT: &str = "results";

#[derive(Parser)]
#[command(name = "allforall", version, about = "Personalized collaborative SGD experiments")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run every configured algorithm over every seed and write records,
    /// summary.csv and errors.svg.
    Run {
        #[arg(long)]
        config: PathBuf,
        /// Overrides `out_dir` from the config.
        #[arg(long, env = "ALLFORALL_OUT")]
        out: Option<PathBuf>,
        /// Comma-separated seeds; overrides `seeds` from the config.
        #[arg(long, value_delimiter = ',')]
        seeds: Option<Vec<u64>>,
        /// Worker threads; 1 runs sequentially.
        #[arg(long, value_name = "K")]
        parallel: Option<usize>,
    },
    /// Print the bound table as CSV.
    Theory {
        #[arg(long)]
        config: PathBuf,
    },
    /// Run the structural and assumption checks; exits nonzero on a failure.
    Validate {
        #[arg(long)]
        config: PathBuf,
    },
}

fn load(path: &Path) -> Result<ExperimentConfig> {
    ExperimentConfig::from_file(path).with_context(|| format!("invalid config {}", path.display()))
}

fn execution(threads: Option<usize>) -> Result<Execution> {
    match threads {
        None => Ok(Execution::default()),
        Some(0) => bail!("--parallel must be at least 1"),
        Some(1) => Ok(Execution::Sequential),
        #[cfg(feature = "parallel")]
        Some(k) => {
            rayon::ThreadPoolBuilder::new()
                .num_threads(k)
                .build_global()
                .context("building the thread pool")?;
            Ok(Execution::Parallel)
        }
        #[cfg(not(feature = "parallel"))]
        Some(k) => {
            log::warn!("built without the parallel feature; ignoring --parallel {k}");
            Ok(Execution::Sequential)
        }
    }
}

fn run(config: &Path, out: Option<PathBuf>, seeds: Option<Vec<u64>>, threads: Option<usize>) -> Result<ExitCode> {
    let mut cfg = load(config)?;
    if let Some(seeds) = seeds {
        if seeds.is_empty() {
            bail!("--seeds is empty");
        }
        cfg.seeds = seeds;
    }
    let out = out
        .or_else(|| cfg.out_dir.clone())
        .unwrap_or_else(|| PathBuf::from(FALLBACK_OUT));
    let exec = execution(threads)?;
    let report = run_experiment(&cfg, Some(&out), exec)?;
    for tag in report.tags() {
        if let Some(err) = report.mean_final(&tag) {
            println!("{tag}: mean final error {err:.6e} over {} seeds", report.finals(&tag).len());
        }
    }
    println!("wrote {}", out.display());
    Ok(ExitCode::SUCCESS)
}

fn validate(config: &Path) -> Result<ExitCode> {
    let cfg = load(config)?;
    let checks = validate_config(&cfg, Execution::default())?;
    for c in &checks {
        println!("{c}");
    }
    Ok(if all_green(&checks) {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    })
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    let outcome = match cli.command {
        Command::Run {
            config,
            out,
            seeds,
            parallel,
        } => run(&config, out, seeds, parallel),
        Command::Theory { config } => load(&config).and_then(|cfg| {
            print!("{}", bound_table(&cfg)?);
            Ok(ExitCode::SUCCESS)
        }),
        Command::Validate { config } => validate(&config),
    };
    outcome.unwrap_or_else(|e| {
        eprintln!("error: {e:#}");
        ExitCode::from(2)
    })
}
