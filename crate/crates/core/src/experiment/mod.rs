//! Configuration, simulation loop and CSV output of experiments.

pub mod config;
pub mod csvio;
pub mod runner;

pub use config::{load_config, load_config_with, load_sweep, ConfigError, ExperimentConfig, Overrides, PolicyKind, ScenarioKind, SweepSpec};
pub use csvio::{record_from_csv, record_to_csv, stats_to_csv, CsvError, RUN_HEADER};
pub use runner::{build_policy, run_experiment, run_seeds, run_sweep, simulate, RunError};
