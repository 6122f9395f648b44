//! Experiment harness behind the `sparsect` command: dataset instances,
//! method runs, benchmark tables, profiles and optimization curves.

pub mod benchmark;
pub mod commands;
pub mod config;
pub mod curves;
pub mod experiment;
pub mod profile;
