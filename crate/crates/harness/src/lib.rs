//! Simulation harness, file formats and command line for `hybridnav-core`.

pub mod cli;
pub mod config;
pub mod formats;
pub mod runner;
pub mod suite;
