//! Configuration loading and study drivers for stochastic LLG simulations.
//!
//! A study is described by a TOML file (see [`config`]) and runs in one of
//! three modes: a single trajectory, a Monte Carlo ensemble over independent
//! Wiener paths, or a common-path refinement study. Results are written as a
//! long-format CSV report; see [`report::StudyReport`].

// `!(x > 0.0)` checks deliberately reject NaN
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod config;
pub mod error;
pub mod initial;
pub mod report;
pub mod study;

pub use config::{load_config, parse_config, Overrides, SimulationConfig, StudyMode};
pub use error::SimError;
pub use initial::InitialData;
pub use report::{ReportRow, RowType, StudyReport};
pub use study::{run_monte_carlo, run_refinement_study, run_single, run_study};
