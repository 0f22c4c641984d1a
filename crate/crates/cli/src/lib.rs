//! Experiment plumbing for the `editnet` binary: config resolution and one
//! function per subcommand.

pub mod commands;
pub mod config;

pub use commands::{cmd_evaluate, cmd_ingest, cmd_label, cmd_summarize, cmd_train};
pub use config::{ExperimentConfig, Overrides, Split};
