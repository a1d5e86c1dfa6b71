//! Engine configuration from a flat TOML file, `COLLEAGUES_*` environment
//! variables and command-line overrides.
//!
//! Precedence: flags > environment > file > defaults.

use std::path::{Path, PathBuf};
use std::time::Duration;

use serde::{Deserialize, Serialize};

use crate::engine::EngineSettings;
use crate::error::ConfigError;
use crate::gateway::ProviderProfile;

pub const ENV_PREFIX: &str = "COLLEAGUES_";
/// Provider credential. Never read from the config file.
pub const API_KEY_ENV: &str = "COLLEAGUES_API_KEY";

pub const KEYS: [&str; 16] = [
    "endpoint",
    "model_name",
    "timeout_secs",
    "max_retries",
    "temperature",
    "backoff_base_ms",
    "compaction_threshold",
    "recent_window",
    "summary_token_cap",
    "facilitator_interval",
    "max_sentences",
    "max_words",
    "roster_min",
    "roster_max",
    "randomization",
    "data_dir",
];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EngineConfig {
    pub provider: ProviderProfile,
    pub engine: EngineSettings,
    pub data_dir: PathBuf,
}

impl Default for EngineConfig {
    fn default() -> Self {
        Self {
            provider: ProviderProfile::default(),
            engine: EngineSettings::default(),
            data_dir: PathBuf::from("data"),
        }
    }
}

fn num<T: std::str::FromStr>(key: &str, value: &str) -> Result<T, ConfigError> {
    value.trim().parse().map_err(|_| ConfigError::InvalidValue {
        key: key.into(),
        value: value.into(),
    })
}

impl EngineConfig {
    /// Applies one flat key.
    pub fn set(&mut self, key: &str, value: &str) -> Result<(), ConfigError> {
        let p = &mut self.provider;
        let e = &mut self.engine;
        match key {
            "endpoint" => p.endpoint = value.to_string(),
            "model_name" => p.model_name = value.to_string(),
            "timeout_secs" => {
                let secs: f64 = num(key, value)?;
                p.timeout = Duration::try_from_secs_f64(secs).map_err(|_| ConfigError::InvalidValue {
                    key: key.into(),
                    value: value.into(),
                })?;
            }
            "max_retries" => p.max_retries = num(key, value)?,
            "temperature" => p.temperature = num(key, value)?,
            "backoff_base_ms" => p.backoff_base = Duration::from_millis(num(key, value)?),
            "compaction_threshold" => e.compaction.threshold = num(key, value)?,
            "recent_window" => e.compaction.recent_window = num(key, value)?,
            "summary_token_cap" => e.compaction.summary_token_cap = num(key, value)?,
            "facilitator_interval" => e.facilitator_interval = num(key, value)?,
            "max_sentences" => e.word_limit.max_sentences = num(key, value)?,
            "max_words" => e.word_limit.max_words = num(key, value)?,
            "roster_min" => e.roster_min = num(key, value)?,
            "roster_max" => e.roster_max = num(key, value)?,
            "randomization" => e.randomization = num(key, value)?,
            "data_dir" => self.data_dir = PathBuf::from(value),
            _ => return Err(ConfigError::UnknownKey(key.into())),
        }
        Ok(())
    }

    pub fn get(&self, key: &str) -> Option<String> {
        let (p, e) = (&self.provider, &self.engine);
        Some(match key {
            "endpoint" => p.endpoint.clone(),
            "model_name" => p.model_name.clone(),
            "timeout_secs" => p.timeout.as_secs_f64().to_string(),
            "max_retries" => p.max_retries.to_string(),
            "temperature" => p.temperature.to_string(),
            "backoff_base_ms" => p.backoff_base.as_millis().to_string(),
            "compaction_threshold" => e.compaction.threshold.to_string(),
            "recent_window" => e.compaction.recent_window.to_string(),
            "summary_token_cap" => e.compaction.summary_token_cap.to_string(),
            "facilitator_interval" => e.facilitator_interval.to_string(),
            "max_sentences" => e.word_limit.max_sentences.to_string(),
            "max_words" => e.word_limit.max_words.to_string(),
            "roster_min" => e.roster_min.to_string(),
            "roster_max" => e.roster_max.to_string(),
            "randomization" => e.randomization.to_string(),
            "data_dir" => self.data_dir.display().to_string(),
            _ => return None,
        })
    }

    /// Applies a flat TOML document. Nested tables are rejected.
    pub fn apply_toml(&mut self, text: &str) -> Result<(), ConfigError> {
        let table: toml::Table = text.parse().map_err(|e: toml::de::Error| ConfigError::Parse(e.to_string()))?;
        for (key, value) in &table {
            let s = match value {
                toml::Value::String(s) => s.clone(),
                toml::Value::Integer(i) => i.to_string(),
                toml::Value::Float(f) => f.to_string(),
                toml::Value::Boolean(b) => b.to_string(),
                other => {
                    return Err(ConfigError::InvalidValue {
                        key: key.clone(),
                        value: other.to_string(),
                    })
                }
            };
            self.set(key, &s)?;
        }
        Ok(())
    }

    /// Applies `COLLEAGUES_<KEY>` variables. Unknown names are ignored.
    pub fn apply_env<I: IntoIterator<Item = (String, String)>>(&mut self, vars: I) -> Result<(), ConfigError> {
        for (name, value) in vars {
            let Some(key) = name.strip_prefix(ENV_PREFIX) else { continue };
            let key = key.to_lowercase();
            if KEYS.contains(&key.as_str()) {
                self.set(&key, &value)?;
            }
        }
        Ok(())
    }

    /// Layers file, environment and flag overrides over the defaults.
    pub fn load<I: IntoIterator<Item = (String, String)>>(
        file: Option<&Path>,
        env: I,
        flags: &[(String, String)],
    ) -> Result<Self, ConfigError> {
        let mut cfg = Self::default();
        if let Some(path) = file {
            cfg.apply_toml(&std::fs::read_to_string(path)?)?;
        }
        cfg.apply_env(env)?;
        for (k, v) in flags {
            cfg.set(k, v)?;
        }
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        let invalid = |key: &str, why: String| ConfigError::InvalidValue { key: key.into(), value: why };
        self.provider.validate().map_err(|e| invalid("provider", e.to_string()))?;
        self.engine.compaction.validate().map_err(|e| invalid("compaction", e))?;
        let e = &self.engine;
        if e.roster_min < 1 || e.roster_min > e.roster_max {
            return Err(invalid("roster_min", format!("{}..={} is empty", e.roster_min, e.roster_max)));
        }
        if !(0.0..=1.0).contains(&e.randomization) {
            return Err(invalid("randomization", e.randomization.to_string()));
        }
        if e.facilitator_interval == 0 {
            return Err(invalid("facilitator_interval", "0".into()));
        }
        if e.word_limit.max_sentences == 0 || e.word_limit.max_words == 0 {
            return Err(invalid("word_limit", "caps must be positive".into()));
        }
        Ok(())
    }

    /// The whole config as a flat TOML document.
    pub fn to_toml(&self) -> String {
        let mut table = toml::Table::new();
        for key in KEYS {
            let raw = self.get(key).expect("known key");
            let value = match key {
                "endpoint" | "model_name" | "data_dir" => toml::Value::String(raw),
                "timeout_secs" | "temperature" | "randomization" => toml::Value::Float(raw.parse().expect("float")),
                _ => toml::Value::Integer(raw.parse().expect("integer")),
            };
            table.insert(key.into(), value);
        }
        toml::to_string(&table).expect("flat table serializes")
    }
}
