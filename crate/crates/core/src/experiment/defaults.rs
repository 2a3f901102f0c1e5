//! The single versioned defaults table.
//!
//! Every tunable in the pipeline gets its default here and nowhere else, so a
//! config file can be as small as an empty document and a resolved config is
//! always a pure function of (file contents, this table, CLI overrides).

use crate::model::{OptimizerKind, TrainConfig};
use crate::objective::{ObjectiveConfig, ScheduleConfig};
use crate::synthetic::BenchmarkConfig;

/// Bumped whenever any default below changes.
pub const DEFAULTS_VERSION: u32 = 1;

pub fn benchmark() -> BenchmarkConfig {
    BenchmarkConfig {
        n_train: 2000,
        n_test: 1000,
        classes: 4,
        input_dim: 16,
        anchors_per_class: 16,
        sigma_obs: 0.02,
        warp_gain: 0.3,
    }
}

pub fn chart() -> crate::chart::ChartConfig {
    crate::chart::ChartConfig {
        charts: 8,
        rank: 2,
        tau_c: 1.0,
    }
}

pub fn objective() -> ObjectiveConfig {
    ObjectiveConfig {
        lambda_kd: 1.0,
        lambda_anchor: 1.0,
        lambda_geo: 8.0,
        lambda_smooth: 8.0,
        lambda_chart: 1.0,
        lambda_reg: 0.1,
        lambda_cont: 0.0,
        lambda_support: 0.0,
        kd_temperature: 2.0,
        tau_smooth: 1.0,
        k_nn: 5,
        schedule: schedule(),
    }
}

pub fn schedule() -> ScheduleConfig {
    ScheduleConfig {
        alpha_start: 1.0,
        alpha_end: 0.0,
        beta_start: 1.0,
        beta_end: 0.5,
    }
}

pub fn teacher_train() -> TrainConfig {
    TrainConfig {
        optimizer: OptimizerKind::Adam,
        learning_rate: 1e-3,
        momentum: 0.9,
        batch_size: 64,
        epochs: 30,
        replay_batch_size: 64,
    }
}

pub fn finetune_train() -> TrainConfig {
    TrainConfig {
        optimizer: OptimizerKind::Adam,
        learning_rate: 5e-4,
        momentum: 0.9,
        batch_size: 64,
        epochs: 15,
        replay_batch_size: 64,
    }
}

/// Hidden layer widths of the MLP; the last hidden layer is the latent layer.
pub const HIDDEN_DIMS: [usize; 2] = [64, 32];

/// Quantile used to calibrate the support-inclusion threshold.
pub const SUPPORT_QUANTILE: f64 = 0.95;

pub fn seeds() -> Vec<u64> {
    vec![7, 8, 9]
}

pub fn methods() -> Vec<crate::objective::Method> {
    use crate::objective::Method::*;
    vec![PlainFt, AnchorCe, ReplayAnchor, OldGeometry, SpmaOg]
}
