//! Experiment orchestration: configuration, the defaults table, the runner,
//! and report aggregation.

pub mod config;
pub mod defaults;
pub mod report;
pub mod runner;

pub use config::{ConfigFile, ExperimentConfig, ModelConfig, TrainOverrides};
pub use report::{emit_report, load_results, ReportRow, ReportTable, ResultDoc};
pub use runner::{run_experiment, write_atomic, CellFailure, RunSummary};
