//! Resolved experiment configuration and its content hash.
//!
//! A config file may be partial; `ConfigFile::resolve` fills every gap from
//! the defaults table and validates the result. The resolved config is the
//! unit of identity: its SHA-256 over canonical JSON names the output
//! directory and is embedded in every artifact.

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::chart::ChartConfig;
use crate::error::{CoreError, Result};
use crate::experiment::defaults;
use crate::model::{OptimizerKind, TrainConfig};
use crate::objective::{Method, ObjectiveConfig};
use crate::synthetic::BenchmarkConfig;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ModelConfig {
    pub hidden_dims: Vec<usize>,
}

impl Default for ModelConfig {
    fn default() -> Self {
        ModelConfig {
            hidden_dims: defaults::HIDDEN_DIMS.to_vec(),
        }
    }
}

/// Fully resolved configuration; every field concrete.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ExperimentConfig {
    pub defaults_version: u32,
    pub benchmark: BenchmarkConfig,
    pub chart: ChartConfig,
    pub objective: ObjectiveConfig,
    pub model: ModelConfig,
    pub teacher: TrainConfig,
    pub finetune: TrainConfig,
    pub methods: Vec<Method>,
    pub seeds: Vec<u64>,
    pub support_quantile: f64,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        ExperimentConfig {
            defaults_version: defaults::DEFAULTS_VERSION,
            benchmark: defaults::benchmark(),
            chart: defaults::chart(),
            objective: defaults::objective(),
            model: ModelConfig::default(),
            teacher: defaults::teacher_train(),
            finetune: defaults::finetune_train(),
            methods: defaults::methods(),
            seeds: defaults::seeds(),
            support_quantile: defaults::SUPPORT_QUANTILE,
        }
    }
}

impl ExperimentConfig {
    pub fn validate(&self) -> Result<()> {
        self.objective.validate()?;
        self.teacher.validate()?;
        self.finetune.validate()?;
        if self.methods.is_empty() {
            return Err(CoreError::validation("config: methods list is empty"));
        }
        if self.seeds.is_empty() {
            return Err(CoreError::validation("config: seeds list is empty"));
        }
        let mut sorted = self.seeds.clone();
        sorted.dedup();
        if sorted.len() != self.seeds.len() {
            return Err(CoreError::validation("config: duplicate seeds"));
        }
        if self.model.hidden_dims.is_empty() {
            return Err(CoreError::validation("config: need at least one hidden layer"));
        }
        if !(self.support_quantile > 0.0 && self.support_quantile < 1.0) {
            return Err(CoreError::validation(
                "config: support_quantile must lie in (0, 1)",
            ));
        }
        let anchor_count = self.benchmark.anchors_per_class * self.benchmark.classes;
        if self.finetune.replay_batch_size > anchor_count {
            return Err(CoreError::validation(format!(
                "config: replay_batch_size {} exceeds anchor count {anchor_count}",
                self.finetune.replay_batch_size
            )));
        }
        if anchor_count < 2 * self.chart.charts {
            return Err(CoreError::validation(format!(
                "config: {} anchors cannot support {} charts",
                anchor_count, self.chart.charts
            )));
        }
        Ok(())
    }

    /// SHA-256 over the canonical JSON serialization.
    pub fn content_hash(&self) -> String {
        let json = serde_json::to_vec(self).expect("config serializes");
        let mut hasher = Sha256::new();
        hasher.update(&json);
        hex_encode(&hasher.finalize())
    }

    /// Directory-name prefix of the content hash.
    pub fn short_hash(&self) -> String {
        self.content_hash()[..12].to_string()
    }
}

fn hex_encode(bytes: &[u8]) -> String {
    bytes.iter().map(|b| format!("{b:02x}")).collect()
}

/// Partial per-field overrides for one training phase.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TrainOverrides {
    pub optimizer: Option<OptimizerKind>,
    pub learning_rate: Option<f64>,
    pub momentum: Option<f64>,
    pub batch_size: Option<usize>,
    pub epochs: Option<usize>,
    pub replay_batch_size: Option<usize>,
}

impl TrainOverrides {
    fn apply(&self, mut base: TrainConfig) -> TrainConfig {
        if let Some(v) = self.optimizer {
            base.optimizer = v;
        }
        if let Some(v) = self.learning_rate {
            base.learning_rate = v;
        }
        if let Some(v) = self.momentum {
            base.momentum = v;
        }
        if let Some(v) = self.batch_size {
            base.batch_size = v;
        }
        if let Some(v) = self.epochs {
            base.epochs = v;
        }
        if let Some(v) = self.replay_batch_size {
            base.replay_batch_size = v;
        }
        base
    }
}

/// The on-disk config document. Unknown keys are rejected everywhere, so a
/// typo fails loudly instead of silently running defaults.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ConfigFile {
    pub benchmark: BenchmarkConfig,
    pub chart: ChartConfig,
    pub objective: ObjectiveConfig,
    pub model: ModelConfig,
    pub teacher: TrainOverrides,
    pub finetune: TrainOverrides,
    pub methods: Option<Vec<String>>,
    pub seeds: Option<Vec<u64>>,
    pub support_quantile: Option<f64>,
}

impl ConfigFile {
    /// Fill gaps from the defaults table, apply CLI overrides, validate.
    pub fn resolve(
        &self,
        seed_override: Option<Vec<u64>>,
        methods_override: Option<Vec<String>>,
    ) -> Result<ExperimentConfig> {
        let methods = match methods_override.as_ref().or(self.methods.as_ref()) {
            Some(names) => names
                .iter()
                .map(|n| Method::parse(n))
                .collect::<Result<Vec<_>>>()?,
            None => defaults::methods(),
        };
        let cfg = ExperimentConfig {
            defaults_version: defaults::DEFAULTS_VERSION,
            benchmark: self.benchmark.clone(),
            chart: self.chart.clone(),
            objective: self.objective.clone(),
            model: self.model.clone(),
            teacher: self.teacher.apply(defaults::teacher_train()),
            finetune: self.finetune.apply(defaults::finetune_train()),
            methods,
            seeds: seed_override
                .or_else(|| self.seeds.clone())
                .unwrap_or_else(defaults::seeds),
            support_quantile: self.support_quantile.unwrap_or(defaults::SUPPORT_QUANTILE),
        };
        cfg.validate()?;
        Ok(cfg)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn default_config_is_valid() {
        let cfg = ExperimentConfig::default();
        cfg.validate().unwrap();
    }

    #[test]
    fn hash_changes_iff_a_value_changes() {
        let a = ExperimentConfig::default();
        let b = ExperimentConfig::default();
        assert_eq!(a.content_hash(), b.content_hash());
        let mut c = ExperimentConfig::default();
        c.objective.lambda_geo += 1.0;
        assert_ne!(a.content_hash(), c.content_hash());
        let mut d = ExperimentConfig::default();
        d.seeds = vec![7];
        assert_ne!(a.content_hash(), d.content_hash());
    }

    #[test]
    fn unknown_keys_are_rejected() {
        let err = serde_json::from_str::<ConfigFile>(r#"{"benchmark": {"n_trian": 10}}"#);
        assert!(err.is_err());
        let err = serde_json::from_str::<ConfigFile>(r#"{"benchmrk": {}}"#);
        assert!(err.is_err());
    }

    #[test]
    fn partial_file_resolves_with_defaults_and_overrides() {
        let file: ConfigFile = serde_json::from_str(
            r#"{"finetune": {"epochs": 3}, "seeds": [5], "methods": ["PlainFT", "er"]}"#,
        )
        .unwrap();
        let cfg = file.resolve(None, None).unwrap();
        assert_eq!(cfg.finetune.epochs, 3);
        assert_eq!(cfg.finetune.learning_rate, 5e-4);
        assert_eq!(cfg.teacher.epochs, 30);
        assert_eq!(cfg.seeds, vec![5]);
        assert_eq!(cfg.methods, vec![Method::PlainFt, Method::ReplayAnchor]);

        let cfg2 = file
            .resolve(Some(vec![1, 2]), Some(vec!["SPMA-OG".into()]))
            .unwrap();
        assert_eq!(cfg2.seeds, vec![1, 2]);
        assert_eq!(cfg2.methods, vec![Method::SpmaOg]);
    }

    #[test]
    fn reserved_objective_weights_fail_validation() {
        let file: ConfigFile =
            serde_json::from_str(r#"{"objective": {"lambda_cont": 0.5}}"#).unwrap();
        assert!(file.resolve(None, None).is_err());
    }
}
