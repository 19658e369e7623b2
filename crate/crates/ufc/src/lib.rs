//! File formats, configuration and command line around [`ufc_core`].
//!
//! The `ufc` binary runs the pipeline in stages (`simulate`, `train`,
//! `calibrate`, `evaluate`, `sweep`, `trace`); [`pipeline`] exposes the same
//! stages as functions.

pub mod cli;
pub mod config;
mod error;
pub mod formats;
pub mod pipeline;

pub use config::{NetworkConfig, RunConfig};
pub use error::{Error, Result};
pub use ufc_core as core;
