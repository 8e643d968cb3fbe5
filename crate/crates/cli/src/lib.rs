//! Command-line pipeline around `qrse-core`: ingest a price panel, classify
//! regimes, fit rolling QRSE windows, run the diagnostic battery and write
//! plot-ready CSV tables.

pub mod app;
pub mod config;
pub mod error;
pub mod pipeline;
pub mod selftest;

pub use config::PipelineConfig;
pub use error::{CliError, Result};
pub use pipeline::{cmd_analyze, cmd_ingest};
