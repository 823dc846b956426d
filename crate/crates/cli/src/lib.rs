//! Command-line front end: CSV ingestion, run configuration and the
//! `analyze`, `train`, `simulate`, `evaluate` and `decide` subcommands.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod commands;
pub mod config;
pub mod error;
pub mod ingest;

pub use commands::{
    analyze_samples, cmd_analyze, cmd_decide, cmd_evaluate, cmd_simulate, cmd_train, dim_seed, CommandArgs,
};
pub use config::RunConfig;
pub use error::{CliError, CliResult};
pub use ingest::{ingest_csv, ingest_reader};
