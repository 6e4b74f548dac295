//! Command-line driver for unreliability-driven coreset selection: training
//! with dynamics recording, selection, retraining and end-to-end experiments.

pub mod cli;
pub mod commands;
pub mod dataset;
pub mod error;
pub mod experiment;
pub mod pipeline;
pub mod plot;
pub mod report;

pub use cli::{run, Cli};
pub use error::HarnessError;
