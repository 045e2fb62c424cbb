//! Simulation runner, file formats and command-line interface on top of
//! `medmi-core`.

pub mod cli;
pub mod config;
pub mod io;
pub mod report;
pub mod runner;
pub mod truth;

pub use config::{Overrides, RunConfig};
pub use runner::run_scenario;
