//! Experiment harness around `lqt-core`: configuration, the two pipelines,
//! weight tuning, persistence and the named reproduction runs behind the
//! `lqt-bench` binary.

pub mod compare;
pub mod config;
pub mod error;
pub mod experiment;
pub mod kernel_io;
pub mod repro;
pub mod tune;

pub use compare::{compare_runs, Reduction};
pub use config::{ExperimentConfig, Pipeline, Plant};
pub use error::{BenchError, Result, Stage};
pub use experiment::{run_experiment, RunOutput, Summary};
