//! Command-line front end: configuration, experiment runs and file output.

pub mod commands;
pub mod config;
pub mod output;
pub mod runs;
