//! Scenario files and the pipeline runner behind the `excess-noise` binary.

pub mod config;
pub mod runner;

pub use config::{
    load_config, load_config_with, parse_config, ConfigError, Mode, Overrides, ScenarioConfig,
};
pub use runner::{run_scenario, scenario_hash, RunError, RunOptions, RunReport};
