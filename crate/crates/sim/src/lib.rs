//! Simulation harness for the COLA relay engine.
//!
//! This crate generates synthetic multi-site trials from a known
//! data-generating process, runs the estimation methods registered in
//! `cola-engine` over many replicates, and reduces the results to the
//! operating-characteristic metrics used throughout the project:
//! failure rate, coverage probability, absolute bias, median estimated
//! standard error, and empirical standard error.
//!
//! The crate is organised around a small pipeline:
//!
//! * [`population`] draws individual-level data from the frozen
//!   data-generating process;
//! * [`assignment`] solves for the outcome-dependent site-membership
//!   mechanism that concentrates or starves cases at a chosen site;
//! * [`scenario`] packages the six study designs as [`ScenarioConfig`]
//!   presets and turns a config plus a seed into a [`GeneratedTrial`];
//! * [`truth`] pins the true marginal log odds ratio by Monte Carlo;
//! * [`harness`] runs replicated experiments over the method registry;
//! * [`report`] renders metric tables as text, CSV, or JSON.
//!
//! Everything is deterministic given a base seed: replicate seeds are
//! derived by counter-mode hashing ([`rng::replicate_seed`]), each
//! generation pass uses its own named RNG stream, and parallel execution
//! collects per-replicate results in index order so thread scheduling
//! cannot perturb the output.

pub mod assignment;
pub mod harness;
pub mod population;
pub mod report;
pub mod rng;
pub mod scenario;
pub mod truth;

use thiserror::Error;

/// Errors raised by trial generation and the experiment harness.
///
/// Method-level non-convergence is never an `Error`; it flows through
/// [`cola_engine::registry::MethodOutcome`] and is counted as data. This
/// type covers conditions that make an experiment ill-posed: infeasible
/// design targets, malformed configuration, and I/O or serialization
/// problems in report handling.
#[derive(Debug, Error)]
pub enum Error {
    #[error("infeasible design targets: {0}")]
    Infeasible(String),

    #[error("invalid scenario config: {0}")]
    InvalidConfig(String),

    #[error("report: {0}")]
    Report(String),

    #[error(transparent)]
    Core(#[from] cola_core::Error),

    #[error("json: {0}")]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

pub use harness::{run_experiment, run_sweep, MethodId, MetricsRow, RARE_PROBABILITY_GRID};
pub use population::{generate_population, Population};
pub use report::{emit_report, parse_csv_report, parse_json_report, ReportFormat};
pub use scenario::{
    generate_equal_split_trial, generate_trial, GeneratedTrial, ScenarioConfig, TrialManifest,
};
pub use truth::{monte_carlo_log_or, TRUE_LOG_OR};
