//! Strict JSON run configurations, dispatched on their `"cmd"` field.

use std::path::Path;

use infoplay_train::config::{canonical_json, fingerprint_text};
use infoplay_train::{GrokConfig, SslConfig, SupervisedConfig, TrainError};
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use serde_json::{Map, Value};

use crate::error::ConfigError;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct NcTheoryArgs {
    pub classes: usize,
}

impl Default for NcTheoryArgs {
    fn default() -> Self {
        Self { classes: 10 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct VerifyBoundsArgs {
    pub seed: u64,
    pub trials: usize,
}

impl Default for VerifyBoundsArgs {
    fn default() -> Self {
        Self { seed: 0, trials: 100 }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum RunConfig {
    NcTheory(NcTheoryArgs),
    VerifyBounds(VerifyBoundsArgs),
    Train(SupervisedConfig),
    TrainSsl(SslConfig),
    Grok(GrokConfig),
}

impl RunConfig {
    pub fn command(&self) -> &'static str {
        match self {
            RunConfig::NcTheory(_) => "nc-theory",
            RunConfig::VerifyBounds(_) => "verify-bounds",
            RunConfig::Train(_) => "train",
            RunConfig::TrainSsl(_) => "train-ssl",
            RunConfig::Grok(_) => "grok",
        }
    }

    fn body(&self) -> Result<Value, serde_json::Error> {
        match self {
            RunConfig::NcTheory(c) => serde_json::to_value(c),
            RunConfig::VerifyBounds(c) => serde_json::to_value(c),
            RunConfig::Train(c) => serde_json::to_value(c),
            RunConfig::TrainSsl(c) => serde_json::to_value(c),
            RunConfig::Grok(c) => serde_json::to_value(c),
        }
    }

    /// Key-sorted compact JSON including `cmd` and every default.
    pub fn canonical_text(&self) -> String {
        let mut body = self.body().expect("configs serialize");
        if let Value::Object(map) = &mut body {
            map.insert("cmd".into(), Value::String(self.command().into()));
        }
        canonical_text(&body)
    }

    pub fn fingerprint(&self) -> String {
        fingerprint_text(&self.canonical_text())
    }
}

/// Canonical form of an arbitrary JSON value (used for flag-driven runs).
pub fn canonical_text(value: &Value) -> String {
    canonical_json(value).expect("json values serialize")
}

pub fn parse_config(path: &Path) -> Result<RunConfig, ConfigError> {
    let text = std::fs::read_to_string(path).map_err(|source| ConfigError::Io {
        path: path.to_path_buf(),
        source,
    })?;
    parse_config_str(&text)
}

pub fn parse_config_str(text: &str) -> Result<RunConfig, ConfigError> {
    let value: Value = serde_json::from_str(text).map_err(|e| ConfigError::ParseError {
        line: Some(e.line()),
        message: e.to_string(),
    })?;
    let Value::Object(mut map) = value else {
        return Err(ConfigError::ParseError {
            line: Some(1),
            message: "expected a JSON object".into(),
        });
    };
    let cmd = match map.remove("cmd") {
        Some(Value::String(s)) => s,
        Some(_) => {
            return Err(ConfigError::ParseError {
                line: None,
                message: "`cmd` must be a string".into(),
            })
        }
        None => return Err(ConfigError::MissingCommand),
    };
    let cfg = match cmd.as_str() {
        "nc-theory" => {
            let c: NcTheoryArgs = body(map)?;
            if c.classes < 3 {
                return Err(range("classes", "need at least 3 classes"));
            }
            RunConfig::NcTheory(c)
        }
        "verify-bounds" => {
            let c: VerifyBoundsArgs = body(map)?;
            if c.trials == 0 {
                return Err(range("trials", "must be positive"));
            }
            RunConfig::VerifyBounds(c)
        }
        "train" => {
            let c: SupervisedConfig = body(map)?;
            c.validate().map_err(from_train)?;
            RunConfig::Train(c)
        }
        "train-ssl" => {
            let c: SslConfig = body(map)?;
            c.validate().map_err(from_train)?;
            RunConfig::TrainSsl(c)
        }
        "grok" => {
            let c: GrokConfig = body(map)?;
            c.validate().map_err(from_train)?;
            RunConfig::Grok(c)
        }
        other => return Err(ConfigError::UnknownCommand(other.into())),
    };
    Ok(cfg)
}

fn body<T: DeserializeOwned>(map: Map<String, Value>) -> Result<T, ConfigError> {
    serde_json::from_value(Value::Object(map)).map_err(|e| {
        let msg = e.to_string();
        match unknown_field_name(&msg) {
            Some(name) => ConfigError::UnknownKey(name),
            None => ConfigError::ParseError {
                line: None,
                message: msg,
            },
        }
    })
}

fn unknown_field_name(msg: &str) -> Option<String> {
    let rest = msg.strip_prefix("unknown field `")?;
    Some(rest[..rest.find('`')?].to_string())
}

fn range(key: &str, reason: &str) -> ConfigError {
    ConfigError::RangeError {
        key: key.into(),
        reason: reason.into(),
    }
}

fn from_train(e: TrainError) -> ConfigError {
    match e {
        TrainError::ConfigInvalid { key, reason } => ConfigError::RangeError { key, reason },
        other => ConfigError::ParseError {
            line: None,
            message: other.to_string(),
        },
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn minimal_nc_theory_config() {
        let c = parse_config_str(r#"{"cmd":"nc-theory","classes":10}"#).unwrap();
        assert_eq!(c, RunConfig::NcTheory(NcTheoryArgs { classes: 10 }));
        assert_eq!(c.canonical_text(), r#"{"classes":10,"cmd":"nc-theory"}"#);
    }

    #[test]
    fn tau_out_of_range() {
        let e = parse_config_str(r#"{"cmd":"train-ssl","tau":1.5}"#).unwrap_err();
        assert!(matches!(e, ConfigError::RangeError { ref key, .. } if key == "tau"), "{e}");
    }

    #[test]
    fn unknown_keys_are_named() {
        let e = parse_config_str(r#"{"cmd":"train","stepz":3}"#).unwrap_err();
        assert!(matches!(e, ConfigError::UnknownKey(ref k) if k == "stepz"), "{e}");
        let e = parse_config_str(r#"{"cmd":"train","data":{"kind":"gaussian_mixture","klasses":3}}"#).unwrap_err();
        assert!(matches!(e, ConfigError::UnknownKey(ref k) if k == "klasses"), "{e}");
    }

    #[test]
    fn syntax_errors_carry_the_line() {
        let e = parse_config_str("{\n  \"cmd\": \"train\",\n  \"steps\": ,\n}").unwrap_err();
        assert!(matches!(e, ConfigError::ParseError { line: Some(3), .. }), "{e}");
    }

    #[test]
    fn missing_and_unknown_commands() {
        assert!(matches!(parse_config_str(r#"{"seed":1}"#), Err(ConfigError::MissingCommand)));
        assert!(matches!(parse_config_str(r#"{"cmd":"fly"}"#), Err(ConfigError::UnknownCommand(_))));
        assert!(matches!(parse_config_str("[1]"), Err(ConfigError::ParseError { .. })));
    }

    #[test]
    fn fingerprint_is_order_independent_and_default_complete() {
        let a = parse_config_str(r#"{"cmd":"train","seed":4,"steps":10,"hidden":[8]}"#).unwrap();
        let b = parse_config_str(r#"{"hidden":[8],"steps":10,"cmd":"train","seed":4}"#).unwrap();
        assert_eq!(a.fingerprint(), b.fingerprint());
        let explicit = parse_config_str(&a.canonical_text()).unwrap();
        assert_eq!(explicit.fingerprint(), a.fingerprint());
        assert!(a.canonical_text().contains("\"batch_size\":64"));
        let c = parse_config_str(r#"{"cmd":"train","seed":5,"steps":10,"hidden":[8]}"#).unwrap();
        assert_ne!(a.fingerprint(), c.fingerprint());
    }

    #[test]
    fn nested_optimizer_and_data_tags_round_trip() {
        let text = r#"{"cmd":"train","optim":{"kind":"adamw","lr":0.01},"data":{"kind":"modular_addition","modulus":7}}"#;
        let c = parse_config_str(text).unwrap();
        let again = parse_config_str(&c.canonical_text()).unwrap();
        assert_eq!(c, again);
    }
}
