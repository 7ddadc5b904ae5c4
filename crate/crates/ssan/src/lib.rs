//! File formats, reports and the command-line harness around `ssan-core`.

pub mod checkpoint;
pub mod cli;
pub mod config;
pub mod error;
pub mod experiment;
pub mod features;
pub mod report;

pub use cli::{parse_args, ExperimentSpec, Mode};
pub use error::{CliError, Result};
pub use experiment::{run_experiment, Outcome};
