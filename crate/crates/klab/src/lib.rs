//! Batch harness: JSON configuration in, CSV time series and a JSON report out.

pub mod cli;
pub mod config;
pub mod output;
pub mod scenario;
