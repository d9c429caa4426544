//! Experiment runner for the TAP bound verification suites.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod config;
pub mod experiments;
pub mod plot;
pub mod report;

pub use config::{ExperimentConfig, EXPERIMENTS};
pub use experiments::{run, HarnessError};
pub use report::ExperimentReport;
