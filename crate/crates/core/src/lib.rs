//! Personalized collaborative stochastic optimization.
//!
//! `N` agents each own an objective `f_i(x) = E ℓ(x, ξ_i)` and exchange
//! stochastic gradients filtered by a bias-driven mixing plan. The crate
//! provides the agent models, the two oracle schedules, similarity and
//! bias matrices, mixing plans, the optimization engines, complexity
//! calculators with hard-instance generators, error metrics, and a seeded
//! experiment runner.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod algorithms;
pub mod error;
pub mod exec;
pub mod experiment;
mod linalg;
pub mod metrics;
pub mod mixing;
pub mod oracle;
pub mod problem;
pub mod rng;
pub mod similarity;
pub mod theory;

pub use error::{Error, Result};
pub use exec::Execution;
pub use problem::{AgentDistribution, AgentProblem, LossKind, Point, Sample};
pub use rng::RngStream;
