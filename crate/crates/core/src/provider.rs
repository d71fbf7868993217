//! Text-generation and relevance-scoring capabilities.
//!
//! Enrichment, ranking and explanation all talk to a [`GenerationProvider`].
//! The engine never requires one: every call site has a deterministic path.
//! [`RemoteChatProvider`] speaks the usual chat-completion wire format.

use std::time::Duration;

use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DecodingParams {
    pub temperature: f64,
    pub max_tokens: u32,
}

impl DecodingParams {
    pub const ENRICHMENT: DecodingParams = DecodingParams {
        temperature: 0.7,
        max_tokens: 500,
    };
    pub const EXPLANATION: DecodingParams = DecodingParams {
        temperature: 0.7,
        max_tokens: 150,
    };
}

impl Default for DecodingParams {
    fn default() -> Self {
        Self::ENRICHMENT
    }
}

#[derive(Debug, thiserror::Error)]
pub enum ProviderError {
    #[error("provider transport error: {0}")]
    Transport(String),
    #[error("provider timed out")]
    Timeout,
    #[error("provider returned an unusable response: {0}")]
    BadResponse(String),
    #[error("provider unavailable: {0}")]
    Unavailable(String),
}

pub trait GenerationProvider: Send + Sync {
    /// Stable identity; part of the enrichment cache key.
    fn identity(&self) -> &str;
    fn generate(&self, prompt: &str, params: &DecodingParams) -> Result<String, ProviderError>;
}

/// Scores (query, passage) pairs, higher is more relevant.
pub trait RelevanceScorer: Send + Sync {
    fn identity(&self) -> &str;
    fn score(&self, query: &str, passages: &[String]) -> Result<Vec<f64>, ProviderError>;
}

/// Always answers with the same text.
#[derive(Debug, Clone)]
pub struct StaticProvider {
    name: String,
    response: String,
}

impl StaticProvider {
    pub fn new(name: impl Into<String>, response: impl Into<String>) -> Self {
        Self {
            name: name.into(),
            response: response.into(),
        }
    }
}

impl GenerationProvider for StaticProvider {
    fn identity(&self) -> &str {
        &self.name
    }

    fn generate(&self, _prompt: &str, _params: &DecodingParams) -> Result<String, ProviderError> {
        Ok(self.response.clone())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RemoteConfig {
    pub endpoint: String,
    pub model: String,
    /// Name of the environment variable holding the bearer token.
    #[serde(default = "default_token_env")]
    pub token_env: String,
    #[serde(default = "default_timeout_secs")]
    pub timeout_secs: u64,
}

fn default_token_env() -> String {
    "COLDSTART_API_TOKEN".to_string()
}

fn default_timeout_secs() -> u64 {
    30
}

#[derive(Debug, Serialize)]
struct ChatMessage<'a> {
    role: &'a str,
    content: &'a str,
}

#[derive(Debug, Serialize)]
struct ChatRequest<'a> {
    model: &'a str,
    messages: Vec<ChatMessage<'a>>,
    temperature: f64,
    max_tokens: u32,
}

#[derive(Debug, Deserialize)]
struct ChatResponse {
    choices: Vec<ChatChoice>,
}

#[derive(Debug, Deserialize)]
struct ChatChoice {
    message: ChatResponseMessage,
}

#[derive(Debug, Deserialize)]
struct ChatResponseMessage {
    content: String,
}

/// Chat-completion provider over HTTP with bearer-token auth.
pub struct RemoteChatProvider {
    config: RemoteConfig,
    identity: String,
    agent: ureq::Agent,
}

impl RemoteChatProvider {
    pub fn new(config: RemoteConfig) -> Self {
        let agent: ureq::Agent = ureq::Agent::config_builder()
            .timeout_global(Some(Duration::from_secs(config.timeout_secs)))
            .http_status_as_error(false)
            .build()
            .into();
        let identity = format!("remote:{}@{}", config.model, config.endpoint);
        Self {
            config,
            identity,
            agent,
        }
    }

    fn bearer(&self) -> Option<String> {
        bearer(&self.config)
    }
}

fn bearer(config: &RemoteConfig) -> Option<String> {
    std::env::var(&config.token_env)
        .ok()
        .filter(|t| !t.is_empty())
        .map(|t| format!("Bearer {t}"))
}

fn transport_error(e: ureq::Error) -> ProviderError {
    match e {
        ureq::Error::Timeout(_) => ProviderError::Timeout,
        other => ProviderError::Transport(other.to_string()),
    }
}

impl GenerationProvider for RemoteChatProvider {
    fn identity(&self) -> &str {
        &self.identity
    }

    fn generate(&self, prompt: &str, params: &DecodingParams) -> Result<String, ProviderError> {
        let body = ChatRequest {
            model: &self.config.model,
            messages: vec![ChatMessage {
                role: "user",
                content: prompt,
            }],
            temperature: params.temperature,
            max_tokens: params.max_tokens,
        };
        let mut req = self.agent.post(&self.config.endpoint);
        if let Some(auth) = self.bearer() {
            req = req.header("Authorization", auth);
        }
        let mut resp = req.send_json(&body).map_err(transport_error)?;
        let status = resp.status().as_u16();
        if !(200..300).contains(&status) {
            return Err(ProviderError::Unavailable(format!("HTTP {status}")));
        }
        let parsed: ChatResponse = resp
            .body_mut()
            .read_json()
            .map_err(|e| ProviderError::BadResponse(e.to_string()))?;
        parsed
            .choices
            .into_iter()
            .next()
            .map(|c| c.message.content)
            .ok_or_else(|| ProviderError::BadResponse("no choices".into()))
    }
}

#[derive(Debug, Serialize)]
struct ScoreRequest<'a> {
    model: &'a str,
    query: &'a str,
    passages: &'a [String],
}

#[derive(Debug, Deserialize)]
struct ScoreResponse {
    scores: Vec<f64>,
}

/// Cross-encoder style scorer over HTTP: POST `{model, query, passages}`,
/// expects `{scores: [...]}` aligned with `passages`.
pub struct RemoteCrossEncoder {
    config: RemoteConfig,
    identity: String,
    agent: ureq::Agent,
}

impl RemoteCrossEncoder {
    pub fn new(config: RemoteConfig) -> Self {
        let agent: ureq::Agent = ureq::Agent::config_builder()
            .timeout_global(Some(Duration::from_secs(config.timeout_secs)))
            .http_status_as_error(false)
            .build()
            .into();
        let identity = format!("cross-encoder:{}@{}", config.model, config.endpoint);
        Self {
            config,
            identity,
            agent,
        }
    }
}

impl RelevanceScorer for RemoteCrossEncoder {
    fn identity(&self) -> &str {
        &self.identity
    }

    fn score(&self, query: &str, passages: &[String]) -> Result<Vec<f64>, ProviderError> {
        let body = ScoreRequest {
            model: &self.config.model,
            query,
            passages,
        };
        let mut req = self.agent.post(&self.config.endpoint);
        if let Some(auth) = bearer(&self.config) {
            req = req.header("Authorization", auth);
        }
        let mut resp = req.send_json(&body).map_err(transport_error)?;
        let status = resp.status().as_u16();
        if !(200..300).contains(&status) {
            return Err(ProviderError::Unavailable(format!("HTTP {status}")));
        }
        let parsed: ScoreResponse = resp
            .body_mut()
            .read_json()
            .map_err(|e| ProviderError::BadResponse(e.to_string()))?;
        if parsed.scores.len() != passages.len() {
            return Err(ProviderError::BadResponse(format!(
                "expected {} scores, got {}",
                passages.len(),
                parsed.scores.len()
            )));
        }
        Ok(parsed.scores)
    }
}
