//! Experiment harness: configs, trial runs, CSV output and method comparisons.

pub mod compare;
pub mod config;
pub mod experiment;
pub mod record;

pub use compare::{compare_methods, render_comparison, CompareError, Comparison};
pub use config::{ConfigError, ExperimentConfig, Method};
pub use experiment::{run_experiment, run_experiment_with_threads, run_trial};
pub use record::{render_csv, TrialRecord};
