//! Command-line harness around `swd-core`: run configuration, training
//! orchestration, metric logging, checkpoints and plot-data export.

pub mod checkpoint;
pub mod config;
pub mod error;
pub mod metrics;
pub mod run;

pub use error::{CliError, CliResult};
