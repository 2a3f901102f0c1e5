//! Continual-learning laboratory built around geometry-preserving
//! fine-tuning.
//!
//! The crate covers the full pipeline: a synthetic warped-ribbon benchmark
//! observed through two input maps, a chart memory of local low-rank factor
//! models over frozen teacher features, the retention loss family with
//! linearly decayed schedules, a small MLP trainer with hand-rolled
//! reverse-mode gradients, representation metrics (linear CKA, distance
//! correlation, support inclusion), and a deterministic experiment runner.

pub mod chart;
pub mod error;
pub mod experiment;
pub mod linalg;
pub mod metrics;
pub mod model;
pub mod objective;
pub mod seeding;
pub mod selftest;
pub mod synthetic;

pub use chart::{Chart, ChartAtlas, ChartConfig};
pub use error::{CoreError, Result};
pub use experiment::{ConfigFile, ExperimentConfig};
pub use linalg::Matrix;
pub use metrics::RunResult;
pub use model::{MlpModel, TrainConfig};
pub use objective::{LossBreakdown, Method, ObjectiveConfig};
pub use synthetic::{BenchmarkBundle, BenchmarkConfig};
