//! Experiment harness for the `gmmee` filters: synthetic and CSV battery
//! traces, filter runs and comparisons, Monte Carlo sweeps, kernel tuning
//! and report output.

pub mod config;
pub mod dataset;
pub mod error;
pub mod experiment;
pub mod metrics;
pub mod reference;
pub mod report;

pub use config::{ExperimentConfig, FilterConfig};
pub use dataset::{load_dataset_csv, write_dataset_csv, Dataset};
pub use error::{LabError, Result};
pub use experiment::{monte_carlo, run_comparison, run_experiment, tune_kernels};
pub use metrics::MetricsReport;
pub use report::{emit_report, Format, Report};
