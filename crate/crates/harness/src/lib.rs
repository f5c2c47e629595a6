//! Experiment runner for `nevlab`: configuration, the check registry and
//! artifact emission.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod checks;
pub mod config;
pub mod run;

pub use config::{ConfigError, ExperimentConfig};
pub use run::{run, RunResult, Status, Summary};
