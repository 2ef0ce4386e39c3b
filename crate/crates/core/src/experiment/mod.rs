//! Configured experiment runs: TOML configs, the multi-seed runner with its
//! CSV and SVG outputs, the validation suite and the bound table.

mod checks;
mod config;
mod plot;
mod runner;
mod table;

pub use checks::{
    all_green, count_mismatches, product_residual, row_sum_residual, triangle_residual, validate_config, Check,
    ASSUMPTION_TOL, STRUCTURE_TOL, TRIPLES,
};
pub use config::{Algo, BiasSource, DistributionSpec, ExperimentConfig, ExperimentLoss};
pub use plot::{render_svg, Series};
pub use runner::{
    bias_levels, build_instance, checkpoints, fixed_step, run_experiment, run_tag, write_summary, BiasLevel,
    ExperimentReport, RunOutcome, SeedInstance, SummaryRow, SUMMARY_HEADER,
};
pub use table::{bound_table, DEFAULT_EPS, TABLE_HEADER};
