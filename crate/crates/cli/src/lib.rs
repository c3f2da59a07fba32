//! Experiment harness: configuration, sweeps and result files.

pub mod config;
pub mod output;
pub mod sweep;

pub use config::{ConfigError, ExperimentConfig, RawConfig, SeedMode, SweepVariable};
pub use sweep::{run_sweep, SweepError, SweepResult};
