//! Batch front end: configuration, command dispatch and artifact export.

pub mod config;
pub mod run;

pub use config::RunConfig;
pub use run::{execute, Outcome, Overrides};
