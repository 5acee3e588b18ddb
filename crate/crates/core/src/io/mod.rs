//! Config parsing, command dispatch, reports, and batch execution.

pub mod batch;
pub mod config;
pub mod json;
pub mod run;
pub mod schema;
pub mod selftest;

pub use batch::{batch_exit_code, run_batch, write_atomic};
pub use config::{parse_batch, parse_config, Command, JobConfig};
pub use run::{run_command, run_job, Outcome, Report};
