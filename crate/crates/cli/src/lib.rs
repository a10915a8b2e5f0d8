//! Scenario runner behind the `qmagsim` command.

pub mod config;
pub mod error;
pub mod manifest;
pub mod output;
pub mod scenarios;
pub mod svg;

pub use config::{Overrides, Scenario, ScenarioConfig};
pub use error::CliError;
pub use manifest::{calibration_json, run_scenario, RunManifest, TableSource};
pub use output::OutputDir;
