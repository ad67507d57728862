//! Experiment harness: configuration, presets, orchestration, metrics,
//! reporting and plots.

pub mod config;
pub mod metrics;
pub mod plot;
pub mod presets;
pub mod report;
pub mod run;

pub use config::{load_config, save_config, ExperimentConfig};
pub use metrics::{relative_errors, Metrics};
pub use presets::{preset, PRESET_NAMES};
pub use report::{compare_runs, read_errors_csv, ErrorRecord, ErrorReport};
pub use run::{run_experiment, RunOutput};
