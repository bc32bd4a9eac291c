//! File formats, pipeline commands and reports for the `tagalign` tool.
//!
//! The geometry lives in [`tagalign_core`]; this crate reads the upstream
//! SLAM and SfM outputs ([`ingest`]), runs the pipeline ([`commands`]) and
//! writes JSON reports ([`report`]) and PLY clouds.

pub mod commands;
pub mod config;
mod error;
pub mod ingest;
pub mod logging;
pub mod report;
pub mod scene;

pub use error::CliError;
