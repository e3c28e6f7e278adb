//! Reproducible experiment runner for renewkit.
//!
//! A run reads one JSON config, dispatches to the library, writes CSV (and
//! NDJSON for sample paths) into the output directory and reports one
//! PASS/FAIL line per check.

pub mod config;
pub mod report;
pub mod runner;

pub use config::{load_config, parse_config, ConfigError, ExperimentConfig, ExperimentKind, Overrides};
pub use report::{Check, Status};
pub use runner::{run, Outcome, RunError};
