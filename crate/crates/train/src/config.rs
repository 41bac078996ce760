//! Run configurations. Every field has a default, unknown keys are rejected,
//! and [`canonical_json`] renders a fully materialized, key-sorted form whose
//! digest identifies the run.

use serde::{Deserialize, Serialize};
use serde_json::Value;
use sha2::{Digest, Sha256};

use crate::data::{self, Dataset, MixtureSpec};
use crate::error::TrainError;
use crate::optim::{OptimizerConfig, Schedule};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum DataConfig {
    GaussianMixture {
        #[serde(default = "d::classes")]
        classes: usize,
        #[serde(default = "d::dim")]
        dim: usize,
        #[serde(default = "d::train_per_class")]
        train_per_class: usize,
        #[serde(default = "d::test_per_class")]
        test_per_class: usize,
        #[serde(default = "d::separation")]
        separation: f64,
    },
    ModularAddition {
        #[serde(default = "d::modulus")]
        modulus: usize,
        #[serde(default = "d::train_frac")]
        train_frac: f64,
    },
}

impl Default for DataConfig {
    fn default() -> Self {
        DataConfig::GaussianMixture {
            classes: d::classes(),
            dim: d::dim(),
            train_per_class: d::train_per_class(),
            test_per_class: d::test_per_class(),
            separation: d::separation(),
        }
    }
}

impl DataConfig {
    pub fn build(&self, seed: u64) -> Result<Dataset, TrainError> {
        match *self {
            DataConfig::GaussianMixture {
                classes,
                dim,
                train_per_class,
                test_per_class,
                separation,
            } => data::make_gaussian_mixture(
                &MixtureSpec {
                    classes,
                    dim,
                    train_per_class,
                    test_per_class,
                    separation,
                },
                seed,
            ),
            DataConfig::ModularAddition { modulus, train_frac } => {
                data::make_modular_addition(modulus, train_frac, seed)
            }
        }
    }

    pub fn validate(&self) -> Result<(), TrainError> {
        match *self {
            DataConfig::GaussianMixture {
                classes,
                dim,
                train_per_class,
                test_per_class,
                separation,
            } => {
                if classes < 2 {
                    return Err(TrainError::config("data.classes", "need at least 2"));
                }
                if dim == 0 {
                    return Err(TrainError::config("data.dim", "must be positive"));
                }
                if train_per_class == 0 || test_per_class == 0 {
                    return Err(TrainError::config("data.train_per_class", "splits must be non-empty"));
                }
                if !(separation.is_finite() && separation >= 0.0) {
                    return Err(TrainError::config("data.separation", "must be finite and >= 0"));
                }
            }
            DataConfig::ModularAddition { modulus, train_frac } => {
                if modulus < 2 {
                    return Err(TrainError::config("data.modulus", "must be at least 2"));
                }
                if !(train_frac > 0.0 && train_frac < 1.0) {
                    return Err(TrainError::config("data.train_frac", "must lie in (0, 1)"));
                }
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AuxMode {
    #[default]
    None,
    Mi,
    Hdr,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AuxConfig {
    pub mode: AuxMode,
    pub lambda: f64,
    /// Stop the auxiliary gradient from reaching the head rows.
    pub detach_head: bool,
}

impl Default for AuxConfig {
    fn default() -> Self {
        Self {
            mode: AuxMode::None,
            lambda: 0.1,
            detach_head: false,
        }
    }
}

impl AuxConfig {
    pub fn active(&self) -> bool {
        self.mode != AuxMode::None && self.lambda != 0.0
    }

    fn validate(&self) -> Result<(), TrainError> {
        if !(self.lambda.is_finite() && self.lambda >= 0.0) {
            return Err(TrainError::config("aux.lambda", "must be finite and >= 0"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SupervisedConfig {
    pub seed: u64,
    /// Seed for batch order and augmentation; `seed` when absent.
    pub order_seed: Option<u64>,
    pub data: DataConfig,
    pub hidden: Vec<usize>,
    pub optim: OptimizerConfig,
    pub schedule: Schedule,
    pub steps: usize,
    pub batch_size: usize,
    pub label_smoothing: f64,
    pub augment: bool,
    pub aux: AuxConfig,
    pub eval_every: usize,
    pub probe_size: usize,
}

impl Default for SupervisedConfig {
    fn default() -> Self {
        Self {
            seed: 0,
            order_seed: None,
            data: DataConfig::default(),
            hidden: vec![256, 256],
            optim: OptimizerConfig::default(),
            schedule: Schedule::default(),
            steps: 2000,
            batch_size: 64,
            label_smoothing: 0.0,
            augment: false,
            aux: AuxConfig::default(),
            eval_every: 100,
            probe_size: 64,
        }
    }
}

fn check_common(hidden: &[usize], batch: usize, eval_every: usize, probe: usize) -> Result<(), TrainError> {
    if hidden.iter().any(|&h| h == 0) {
        return Err(TrainError::config("hidden", "widths must be positive"));
    }
    if batch == 0 {
        return Err(TrainError::config("batch_size", "must be positive"));
    }
    if eval_every == 0 {
        return Err(TrainError::config("eval_every", "must be positive"));
    }
    if probe < 2 {
        return Err(TrainError::config("probe_size", "must be at least 2"));
    }
    Ok(())
}

impl SupervisedConfig {
    pub fn validate(&self) -> Result<(), TrainError> {
        self.data.validate()?;
        self.optim.validate()?;
        self.aux.validate()?;
        check_common(&self.hidden, self.batch_size, self.eval_every, self.probe_size)?;
        if !(0.0..1.0).contains(&self.label_smoothing) {
            return Err(TrainError::config("label_smoothing", "must lie in [0, 1)"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SslConfig {
    pub seed: u64,
    pub data: DataConfig,
    pub hidden: Vec<usize>,
    pub optim: OptimizerConfig,
    pub schedule: Schedule,
    pub steps: usize,
    pub labels_per_class: usize,
    pub unlabeled: usize,
    /// Labeled rows per step; each step also draws `mu · batch_size`
    /// unlabeled rows.
    pub batch_size: usize,
    pub mu: usize,
    pub tau: f64,
    pub lambda_u: f64,
    pub lambda_f: f64,
    pub ema_decay: f64,
    pub aux: AuxConfig,
    pub eval_every: usize,
    pub probe_size: usize,
}

impl Default for SslConfig {
    fn default() -> Self {
        Self {
            seed: 0,
            data: DataConfig::GaussianMixture {
                classes: d::classes(),
                dim: d::dim(),
                train_per_class: 1000,
                test_per_class: d::test_per_class(),
                separation: d::separation(),
            },
            hidden: vec![256, 256],
            optim: OptimizerConfig::default(),
            schedule: Schedule::default(),
            steps: 1000,
            labels_per_class: 4,
            unlabeled: 2000,
            batch_size: 16,
            mu: 7,
            tau: 0.95,
            lambda_u: 1.0,
            lambda_f: 0.01,
            ema_decay: 0.999,
            aux: AuxConfig::default(),
            eval_every: 100,
            probe_size: 64,
        }
    }
}

impl SslConfig {
    pub fn validate(&self) -> Result<(), TrainError> {
        self.data.validate()?;
        self.optim.validate()?;
        self.aux.validate()?;
        check_common(&self.hidden, self.batch_size, self.eval_every, self.probe_size)?;
        if self.mu == 0 {
            return Err(TrainError::config("mu", "must be positive"));
        }
        if !(self.tau > 0.0 && self.tau < 1.0) {
            return Err(TrainError::config("tau", format!("{} is outside (0, 1)", self.tau)));
        }
        for (key, v) in [("lambda_u", self.lambda_u), ("lambda_f", self.lambda_f)] {
            if !(v.is_finite() && v >= 0.0) {
                return Err(TrainError::config(key, "must be finite and >= 0"));
            }
        }
        if !(0.0..1.0).contains(&self.ema_decay) {
            return Err(TrainError::config("ema_decay", "must lie in [0, 1)"));
        }
        if self.labels_per_class == 0 {
            return Err(TrainError::config("labels_per_class", "must be positive"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GrokConfig {
    pub seed: u64,
    pub modulus: usize,
    pub train_frac: f64,
    pub hidden: Vec<usize>,
    pub lr: f64,
    pub weight_decay: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epochs: usize,
    pub eval_every: usize,
    pub probe_size: usize,
}

impl Default for GrokConfig {
    fn default() -> Self {
        Self {
            seed: 0,
            modulus: 23,
            train_frac: 0.3,
            hidden: vec![512],
            lr: 1e-3,
            weight_decay: 1.0,
            beta1: 0.9,
            beta2: 0.999,
            epochs: 5000,
            eval_every: 1,
            probe_size: 64,
        }
    }
}

impl GrokConfig {
    pub fn validate(&self) -> Result<(), TrainError> {
        DataConfig::ModularAddition {
            modulus: self.modulus,
            train_frac: self.train_frac,
        }
        .validate()?;
        self.optim().validate()?;
        check_common(&self.hidden, 1, self.eval_every, self.probe_size)?;
        if self.epochs == 0 {
            return Err(TrainError::config("epochs", "must be positive"));
        }
        Ok(())
    }

    pub fn optim(&self) -> OptimizerConfig {
        OptimizerConfig::AdamW {
            lr: self.lr,
            beta1: self.beta1,
            beta2: self.beta2,
            eps: 1e-8,
            weight_decay: self.weight_decay,
        }
    }
}

/// Key-sorted compact JSON of `value` with every default filled in.
pub fn canonical_json<T: Serialize>(value: &T) -> Result<String, TrainError> {
    Ok(sort_keys(serde_json::to_value(value)?).to_string())
}

fn sort_keys(v: Value) -> Value {
    match v {
        Value::Object(map) => {
            let mut entries: Vec<(String, Value)> = map.into_iter().collect();
            entries.sort_by(|a, b| a.0.cmp(&b.0));
            Value::Object(entries.into_iter().map(|(k, v)| (k, sort_keys(v))).collect())
        }
        Value::Array(items) => Value::Array(items.into_iter().map(sort_keys).collect()),
        other => other,
    }
}

/// Hex SHA-256 of the canonical text.
pub fn fingerprint_text(canonical: &str) -> String {
    hex::encode(Sha256::digest(canonical.as_bytes()))
}

pub fn fingerprint<T: Serialize>(value: &T) -> Result<String, TrainError> {
    Ok(fingerprint_text(&canonical_json(value)?))
}

mod d {
    pub fn classes() -> usize {
        4
    }
    pub fn dim() -> usize {
        16
    }
    pub fn train_per_class() -> usize {
        256
    }
    pub fn test_per_class() -> usize {
        256
    }
    pub fn separation() -> f64 {
        4.0
    }
    pub fn modulus() -> usize {
        23
    }
    pub fn train_frac() -> f64 {
        0.3
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn partial_config_fills_defaults() {
        let c: SupervisedConfig =
            serde_json::from_str(r#"{"steps": 10, "data": {"kind": "gaussian_mixture", "classes": 10}}"#).unwrap();
        assert_eq!(c.steps, 10);
        assert_eq!(c.batch_size, 64);
        assert!(matches!(c.data, DataConfig::GaussianMixture { classes: 10, dim: 16, .. }));
        c.validate().unwrap();
    }

    #[test]
    fn unknown_keys_are_rejected() {
        assert!(serde_json::from_str::<SupervisedConfig>(r#"{"stepz": 10}"#).is_err());
        assert!(serde_json::from_str::<SupervisedConfig>(r#"{"data": {"kind": "gaussian_mixture", "foo": 1}}"#).is_err());
        assert!(serde_json::from_str::<SupervisedConfig>(r#"{"optim": {"kind": "sgd", "lr": 0.1, "beta": 1}}"#).is_err());
    }

    #[test]
    fn fingerprint_ignores_key_order() {
        let a: SupervisedConfig = serde_json::from_str(r#"{"steps": 5, "seed": 3}"#).unwrap();
        let b: SupervisedConfig = serde_json::from_str(r#"{"seed": 3, "steps": 5}"#).unwrap();
        assert_eq!(fingerprint(&a).unwrap(), fingerprint(&b).unwrap());
        let c: SupervisedConfig = serde_json::from_str(r#"{"seed": 4, "steps": 5}"#).unwrap();
        assert_ne!(fingerprint(&a).unwrap(), fingerprint(&c).unwrap());
        let text = canonical_json(&a).unwrap();
        assert!(text.starts_with(r#"{"augment":false,"aux":{"detach_head":false,"lambda":0.1,"mode":"none"}"#));
    }

    #[test]
    fn range_checks() {
        let mut s = SslConfig {
            tau: 1.5,
            ..Default::default()
        };
        assert!(matches!(s.validate(), Err(TrainError::ConfigInvalid { ref key, .. }) if key == "tau"));
        s.tau = 0.95;
        s.validate().unwrap();
        GrokConfig::default().validate().unwrap();
    }
}
