//! Experiment driver on top of `perfpred-core`: dataset files,
//! configuration, sweeps with aggregated trajectories, and numerical checks.

pub mod checks;
pub mod config;
pub mod csv_io;
pub mod experiment;
pub mod sweep;
