//! Experiment harness, table and chart rendering, and the command-line
//! interface on top of `uptodate-core`.
//!
//! Results are NDJSON, one [`harness::RoundRecord`] per (method, round)
//! cell, appended by a single writer so an interrupted run resumes where it
//! stopped.

pub mod cli;
pub mod config;
pub mod error;
pub mod harness;
pub mod plot;
pub mod report;

pub use config::ExperimentConfig;
pub use error::HarnessError;
pub use harness::{aggregate, run_experiment, AggregateTable, RoundRecord};
