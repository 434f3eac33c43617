//! Experiment driver for the beaconing simulator: config files, sweeps,
//! figure presets and output writers.

pub mod config_file;
pub mod error;
pub mod figures;
pub mod output;
pub mod sweep;

pub use config_file::{load_config, ConfigDocument};
pub use error::CliError;
pub use sweep::{run_sweep, RunSettings, SweepSpec};
