//! Experiment runner for boundary-aware explanation uncertainty.
//!
//! Every subcommand reads a TOML [`config::RunConfig`], runs the pipeline
//! and writes CSV tables, PGM heatmaps and a `manifest.json` to the
//! configured output directory.

pub mod config;
pub mod error;
pub mod experiments;
pub mod output;
pub mod pipeline;

pub use config::{Overrides, RunConfig};
pub use error::{CliError, Stage};
