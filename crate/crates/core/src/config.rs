//! Engine configuration, read from a TOML file. Every section is optional
//! and falls back to the built-in defaults.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::adaptation::AdaptationConfig;
use crate::embed::DEFAULT_DIM;
use crate::enrichment::EnrichmentConfig;
use crate::eval::EvalConfig;
use crate::graph::DEFAULT_INTERACTION_RATE;
use crate::provider::RemoteConfig;
use crate::recommender::RecommenderConfig;

#[derive(Debug, thiserror::Error)]
pub enum ConfigError {
    #[error("config i/o on {path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
    #[error("config parse error: {0}")]
    Parse(#[from] toml::de::Error),
    #[error("config serialize error: {0}")]
    Serialize(#[from] toml::ser::Error),
    #[error("invalid config: {0}")]
    Invalid(String),
}

/// Optional remote capabilities. Absent sections mean the deterministic path.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ProvidersConfig {
    /// Chat-completion endpoint used for ranking and explanations.
    pub generation: Option<RemoteConfig>,
    /// Cross-encoder endpoint used for reranking.
    pub scorer: Option<RemoteConfig>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ServiceConfig {
    pub bind: String,
    /// Static key expected in the `x-api-key` header; `None` disables the check.
    pub api_key: Option<String>,
    /// Allows the `x-test-clock` override header.
    pub test_mode: bool,
    /// Allowed CORS origins; empty allows any origin.
    pub cors_origins: Vec<String>,
    pub default_k: usize,
    pub max_k: usize,
}

impl Default for ServiceConfig {
    fn default() -> Self {
        Self {
            bind: "127.0.0.1:8080".into(),
            api_key: None,
            test_mode: false,
            cors_origins: Vec::new(),
            default_k: 10,
            max_k: 100,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PathsConfig {
    /// Event log and snapshots live here.
    pub data_dir: PathBuf,
    /// JSON-lines file of raw items, or a MovieLens directory. `None` uses
    /// the built-in demo catalogue.
    pub catalog: Option<PathBuf>,
}

impl Default for PathsConfig {
    fn default() -> Self {
        Self {
            data_dir: PathBuf::from("var"),
            catalog: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct EngineConfig {
    pub embedding_dim: usize,
    /// η for INTERACTED edge updates.
    pub interaction_rate: f64,
    pub enrichment: EnrichmentConfig,
    pub recommender: RecommenderConfig,
    pub adaptation: AdaptationConfig,
    pub eval: EvalConfig,
    pub providers: ProvidersConfig,
    pub service: ServiceConfig,
    pub paths: PathsConfig,
}

impl Default for EngineConfig {
    fn default() -> Self {
        Self {
            embedding_dim: DEFAULT_DIM,
            interaction_rate: DEFAULT_INTERACTION_RATE,
            enrichment: EnrichmentConfig::default(),
            recommender: RecommenderConfig::default(),
            adaptation: AdaptationConfig::default(),
            eval: EvalConfig::default(),
            providers: ProvidersConfig::default(),
            service: ServiceConfig::default(),
            paths: PathsConfig::default(),
        }
    }
}

impl EngineConfig {
    pub fn from_toml_str(text: &str) -> Result<Self, ConfigError> {
        let cfg: Self = toml::from_str(text)?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self, ConfigError> {
        let text = std::fs::read_to_string(path).map_err(|source| ConfigError::Io {
            path: path.to_path_buf(),
            source,
        })?;
        Self::from_toml_str(&text)
    }

    pub fn to_toml_string(&self) -> Result<String, ConfigError> {
        Ok(toml::to_string_pretty(self)?)
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        let bad = |m: String| Err(ConfigError::Invalid(m));
        if self.embedding_dim == 0 {
            return bad("embedding_dim must be positive".into());
        }
        if !(self.interaction_rate > 0.0 && self.interaction_rate <= 1.0) {
            return bad(format!("interaction_rate {} outside (0, 1]", self.interaction_rate));
        }
        let a = &self.adaptation;
        for (name, v) in [("embedding_rate", a.embedding_rate), ("drift_rate", a.drift_rate)] {
            if !(v > 0.0 && v <= 1.0) {
                return bad(format!("adaptation.{name} {v} outside (0, 1]"));
            }
        }
        if !(0.0..=1.0).contains(&a.serendipity_rate) {
            return bad(format!(
                "adaptation.serendipity_rate {} outside [0, 1]",
                a.serendipity_rate
            ));
        }
        if a.refine_every == 0 {
            return bad("adaptation.refine_every must be positive".into());
        }
        if self.recommender.max_pool == 0 {
            return bad("recommender.max_pool must be positive".into());
        }
        if self.service.default_k == 0 || self.service.default_k > self.service.max_k {
            return bad("service.default_k must lie in 1..=max_k".into());
        }
        self.eval.validate().map_err(|e| ConfigError::Invalid(e.to_string()))
    }
}
