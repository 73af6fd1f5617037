//! Application configuration.
//!
//! Precedence, highest first: command-line flag, environment variable,
//! config file, built-in default. Credentials come from the environment only
//! and are never serialized.

use std::fmt;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::embed::EmbedderProfile;
use crate::llm::ModelProfile;
use crate::{DEFAULT_CONTEXT_BUDGET, DEFAULT_TOP_K};

pub const ENV_LLM_API_BASE: &str = "LLM_API_BASE";
pub const ENV_LLM_API_KEY: &str = "LLM_API_KEY";
pub const ENV_EMBED_API_BASE: &str = "EMBED_API_BASE";
pub const ENV_EMBED_API_KEY: &str = "EMBED_API_KEY";

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("cannot read config {path}: {source}")]
    Read {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("invalid config {path}: {source}")]
    Parse {
        path: PathBuf,
        #[source]
        source: serde_json::Error,
    },
    #[error("invalid config: {0}")]
    Invalid(String),
}

/// An API key. Debug output is redacted and it never serializes.
#[derive(Clone, PartialEq, Eq)]
pub struct Secret(String);

impl Secret {
    pub fn new(value: impl Into<String>) -> Self {
        Self(value.into())
    }

    pub fn expose(&self) -> &str {
        &self.0
    }
}

impl fmt::Debug for Secret {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str("Secret(<redacted>)")
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct AppConfig {
    pub dataset_path: Option<PathBuf>,
    pub records_path: Option<PathBuf>,
    pub index_path: PathBuf,
    pub embedder: EmbedderProfile,
    pub base_model: ModelProfile,
    pub enhanced_model: ModelProfile,
    pub k: usize,
    pub context_budget: usize,
    pub bind: String,
    pub max_in_flight: usize,
    pub embed_api_base: Option<String>,
    #[serde(skip)]
    pub llm_api_key: Option<Secret>,
    #[serde(skip)]
    pub embed_api_key: Option<Secret>,
}

impl Default for AppConfig {
    fn default() -> Self {
        Self {
            dataset_path: None,
            records_path: None,
            index_path: PathBuf::from("finrag.idx"),
            embedder: EmbedderProfile::default(),
            base_model: ModelProfile::base(),
            enhanced_model: ModelProfile::enhanced(),
            k: DEFAULT_TOP_K,
            context_budget: DEFAULT_CONTEXT_BUDGET,
            bind: "127.0.0.1:8080".to_string(),
            max_in_flight: 4,
            embed_api_base: None,
            llm_api_key: None,
            embed_api_key: None,
        }
    }
}

impl AppConfig {
    /// Reads a JSON config file; missing keys take their defaults.
    pub fn from_file(path: &Path) -> Result<Self, ConfigError> {
        let text = std::fs::read_to_string(path).map_err(|source| ConfigError::Read {
            path: path.to_path_buf(),
            source,
        })?;
        serde_json::from_str(&text).map_err(|source| ConfigError::Parse {
            path: path.to_path_buf(),
            source,
        })
    }

    /// Overlays environment values fetched through `lookup`.
    pub fn apply_env(&mut self, lookup: impl Fn(&str) -> Option<String>) {
        let get = |k: &str| lookup(k).filter(|v| !v.trim().is_empty());
        if let Some(base) = get(ENV_LLM_API_BASE) {
            self.base_model.endpoint = base.clone();
            self.enhanced_model.endpoint = base;
        }
        if let Some(key) = get(ENV_LLM_API_KEY) {
            self.llm_api_key = Some(Secret::new(key));
        }
        if let Some(base) = get(ENV_EMBED_API_BASE) {
            self.embed_api_base = Some(base);
        }
        if let Some(key) = get(ENV_EMBED_API_KEY) {
            self.embed_api_key = Some(Secret::new(key));
        }
    }

    /// File (if any) plus the process environment.
    pub fn load(file: Option<&Path>) -> Result<Self, ConfigError> {
        let mut cfg = match file {
            Some(path) => Self::from_file(path)?,
            None => Self::default(),
        };
        cfg.apply_env(|k| std::env::var(k).ok());
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        if self.k == 0 {
            return Err(ConfigError::Invalid("k must be at least 1".into()));
        }
        if self.context_budget == 0 {
            return Err(ConfigError::Invalid(
                "context budget must be at least 1".into(),
            ));
        }
        self.embedder
            .validate()
            .map_err(|e| ConfigError::Invalid(e.to_string()))?;
        for profile in [&self.base_model, &self.enhanced_model] {
            profile
                .validate()
                .map_err(|e| ConfigError::Invalid(format!("{}: {e}", profile.name)))?;
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::collections::HashMap;

    #[test]
    fn defaults() {
        let cfg = AppConfig::default();
        assert_eq!(cfg.k, 5);
        assert_eq!(cfg.context_budget, 1024);
        assert_eq!(cfg.embedder.dim, 384);
        assert_eq!(cfg.base_model.name, "gpt-3.5-turbo");
        assert_eq!(cfg.enhanced_model.name, "gpt-3.5-turbo-1106");
        assert!(cfg.validate().is_ok());
    }

    #[test]
    fn env_overrides_file_values() {
        let mut cfg: AppConfig =
            serde_json::from_str(r#"{"k": 3, "embed_api_base": "http://file"}"#).unwrap();
        assert_eq!(cfg.k, 3);
        let env: HashMap<&str, &str> = [
            (ENV_EMBED_API_BASE, "http://env"),
            (ENV_LLM_API_BASE, "http://llm"),
            (ENV_LLM_API_KEY, "sk-secret-value"),
        ]
        .into();
        cfg.apply_env(|k| env.get(k).map(|v| v.to_string()));
        assert_eq!(cfg.embed_api_base.as_deref(), Some("http://env"));
        assert_eq!(cfg.base_model.endpoint, "http://llm");
        assert_eq!(cfg.enhanced_model.endpoint, "http://llm");
        assert_eq!(
            cfg.llm_api_key.as_ref().unwrap().expose(),
            "sk-secret-value"
        );
    }

    #[test]
    fn credentials_never_leak() {
        let cfg = AppConfig {
            llm_api_key: Some(Secret::new("sk-secret-value")),
            embed_api_key: Some(Secret::new("emb-secret-value")),
            ..Default::default()
        };
        let json = serde_json::to_string(&cfg).unwrap();
        let debug = format!("{cfg:?}");
        for out in [json, debug] {
            assert!(!out.contains("secret-value"), "{out}");
        }
        // Keys in a config file are ignored.
        let cfg: AppConfig = serde_json::from_str(r#"{"llm_api_key": "x"}"#).unwrap();
        assert!(cfg.llm_api_key.is_none());
    }

    #[test]
    fn invalid_values() {
        let zero_k = AppConfig {
            k: 0,
            ..Default::default()
        };
        assert!(zero_k.validate().is_err());
        let zero_budget = AppConfig {
            context_budget: 0,
            ..Default::default()
        };
        assert!(zero_budget.validate().is_err());
    }
}
