//! Scenario configuration, validation runs and artifact export for `ringphs`.

pub mod runner;
pub mod scenario;

pub use runner::{run, run_checks, Check, CheckName, RunOptions, ValidationReport};
pub use scenario::{Artifact, ConfigError, Scenario};
