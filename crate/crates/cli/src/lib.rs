//! Command-line front end: layered configuration, experiment runs, CSV and
//! JSON artifacts.

pub mod config;
pub mod run;
