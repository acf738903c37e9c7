//! Experiment definitions, sweeps over realizations, and result files.

mod config;
mod output;
mod run;

pub use config::{load_config, parse_config, validate_config, Antennas, ConfigIssue, ExperimentConfig, LoadedConfig};
pub use output::{format_number, geometric_means_from_csv};
pub use run::{run_experiment, sweep_points, ExperimentOutcome, Failure, PointSummary, SweepPoint};
