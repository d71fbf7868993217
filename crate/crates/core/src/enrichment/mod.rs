//! Item enrichment: sparse catalog metadata in, structured [`SemanticProfile`] out.
//!
//! The provider path builds a prompt, asks a [`GenerationProvider`] and parses
//! the free-text answer. When parsing keeps failing the rule-based
//! [`deterministic_enrich`] result is used instead. Results are cached per
//! `(item_id, provider identity)`.

mod parse;
mod prompt;
mod rules;

use std::collections::HashMap;
use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;
use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::Arc;

use parking_lot::RwLock;
use serde::{Deserialize, Serialize};

use crate::embed::Embedder;
use crate::provider::{DecodingParams, GenerationProvider, ProviderError};
use crate::vark::VarkVector;

pub use parse::{parse_profile_response, render_profile, ParseError, ProfileParser};
pub use prompt::build_enrichment_prompt;
pub use rules::{deterministic_enrich, deterministic_enrich_with, GenreRule, GenreRules, HAS_GENRE};

/// Identity used in the cache for rule-based profiles.
pub const DETERMINISTIC_IDENTITY: &str = "deterministic";

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RawItem {
    pub item_id: String,
    pub title: String,
    #[serde(default)]
    pub genres: Vec<String>,
    pub year: i32,
    #[serde(default)]
    pub description: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Entity {
    pub name: String,
    pub kind: String,
    pub description: String,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub embedding: Vec<f32>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Relation {
    pub subject: String,
    pub predicate: String,
    pub object: String,
    pub confidence: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SemanticProfile {
    pub item_id: String,
    pub entities: Vec<Entity>,
    pub relations: Vec<Relation>,
    pub complexity: u8,
    pub prerequisites: Vec<String>,
    pub audience: Vec<String>,
    pub vark_alignment: VarkVector,
}

/// Lowercased, trimmed, inner whitespace collapsed. Entities with the same
/// normalized name are the same entity.
pub fn normalize_entity_name(name: &str) -> String {
    name.split_whitespace().collect::<Vec<_>>().join(" ").to_lowercase()
}

impl SemanticProfile {
    pub fn entity(&self, name: &str) -> Option<&Entity> {
        let key = normalize_entity_name(name);
        self.entities.iter().find(|e| normalize_entity_name(&e.name) == key)
    }

    /// Checks every structural invariant; returns the first violation.
    pub fn validate(&self) -> Result<(), String> {
        if !(1..=5).contains(&self.complexity) {
            return Err(format!("complexity {} outside 1-5", self.complexity));
        }
        if !self.vark_alignment.is_valid() {
            return Err("vark alignment off the simplex".into());
        }
        let mut seen = std::collections::HashSet::new();
        for e in &self.entities {
            if !seen.insert(normalize_entity_name(&e.name)) {
                return Err(format!("duplicate entity {:?}", e.name));
            }
        }
        for r in &self.relations {
            if !(0.0..=1.0).contains(&r.confidence) {
                return Err(format!("confidence {} outside [0,1]", r.confidence));
            }
            for end in [&r.subject, &r.object] {
                if *end != self.item_id && self.entity(end).is_none() {
                    return Err(format!("relation endpoint {end:?} is not a listed entity"));
                }
            }
        }
        Ok(())
    }
}

#[derive(Debug, thiserror::Error)]
pub enum EnrichmentError {
    #[error(transparent)]
    Provider(#[from] ProviderError),
    #[error(transparent)]
    Parse(#[from] ParseError),
    #[error("cache i/o: {0}")]
    Io(#[from] std::io::Error),
    #[error("corrupt cache record on line {line}: {message}")]
    CacheFormat { line: usize, message: String },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct EnrichmentConfig {
    pub retries: u32,
    pub fallback_enabled: bool,
    pub decoding: DecodingParams,
}

impl Default for EnrichmentConfig {
    fn default() -> Self {
        Self {
            retries: 2,
            fallback_enabled: true,
            decoding: DecodingParams::ENRICHMENT,
        }
    }
}

#[derive(Serialize, Deserialize)]
struct CacheRecord {
    item_id: String,
    provider: String,
    profile: SemanticProfile,
}

/// Orchestrates prompt → provider → parse with retry, fallback and caching.
pub struct Enricher {
    config: EnrichmentConfig,
    rules: GenreRules,
    embedder: Option<Arc<dyn Embedder>>,
    cache: RwLock<HashMap<(String, String), SemanticProfile>>,
    provider_calls: AtomicU64,
}

impl Enricher {
    pub fn new(config: EnrichmentConfig) -> Self {
        Self {
            config,
            rules: GenreRules::builtin().clone(),
            embedder: None,
            cache: RwLock::new(HashMap::new()),
            provider_calls: AtomicU64::new(0),
        }
    }

    pub fn with_rules(mut self, rules: GenreRules) -> Self {
        self.rules = rules;
        self
    }

    /// Attach entity embeddings to every produced profile.
    pub fn with_embedder(mut self, embedder: Arc<dyn Embedder>) -> Self {
        self.embedder = Some(embedder);
        self
    }

    pub fn config(&self) -> &EnrichmentConfig {
        &self.config
    }

    /// Total provider invocations made by this enricher.
    pub fn provider_calls(&self) -> u64 {
        self.provider_calls.load(Ordering::Relaxed)
    }

    pub fn cached_len(&self) -> usize {
        self.cache.read().len()
    }

    pub fn enrich_item(
        &self,
        item: &RawItem,
        provider: Option<&dyn GenerationProvider>,
    ) -> Result<SemanticProfile, EnrichmentError> {
        let identity = provider
            .map(|p| p.identity().to_string())
            .unwrap_or_else(|| DETERMINISTIC_IDENTITY.to_string());
        let key = (item.item_id.clone(), identity);
        if let Some(hit) = self.cache.read().get(&key) {
            return Ok(hit.clone());
        }

        let mut profile = match provider {
            None => deterministic_enrich_with(item, &self.rules),
            Some(p) => self.enrich_via_provider(item, p)?,
        };
        self.attach_embeddings(&mut profile);
        self.cache.write().insert(key, profile.clone());
        Ok(profile)
    }

    fn enrich_via_provider(
        &self,
        item: &RawItem,
        provider: &dyn GenerationProvider,
    ) -> Result<SemanticProfile, EnrichmentError> {
        let prompt = build_enrichment_prompt(item);
        let parser = ProfileParser::new(&item.item_id).with_alias(&item.title);
        let mut last_err: EnrichmentError = ParseError::Empty.into();
        for attempt in 0..=self.config.retries {
            self.provider_calls.fetch_add(1, Ordering::Relaxed);
            match provider.generate(&prompt, &self.config.decoding) {
                Ok(text) => match parser.parse(&text) {
                    Ok(profile) => return Ok(profile),
                    Err(e) => {
                        tracing::debug!(item = %item.item_id, attempt, error = %e, "unparseable profile response");
                        last_err = e.into();
                    }
                },
                Err(e) => {
                    tracing::warn!(item = %item.item_id, attempt, error = %e, "enrichment provider failed");
                    last_err = e.into();
                }
            }
        }
        if self.config.fallback_enabled {
            Ok(deterministic_enrich_with(item, &self.rules))
        } else {
            Err(last_err)
        }
    }

    fn attach_embeddings(&self, profile: &mut SemanticProfile) {
        if let Some(embedder) = &self.embedder {
            for e in &mut profile.entities {
                if e.embedding.is_empty() {
                    e.embedding = embedder.embed(&format!("{} {}", e.name, e.description));
                }
            }
        }
    }

    /// Writes the cache as one JSON record per line, sorted by key.
    pub fn save_cache(&self, path: &Path) -> Result<(), EnrichmentError> {
        let cache = self.cache.read();
        let mut keys: Vec<_> = cache.keys().collect();
        keys.sort();
        let mut w = BufWriter::new(File::create(path)?);
        for key in keys {
            let rec = CacheRecord {
                item_id: key.0.clone(),
                provider: key.1.clone(),
                profile: cache[key].clone(),
            };
            serde_json::to_writer(&mut w, &rec).map_err(std::io::Error::from)?;
            w.write_all(b"\n")?;
        }
        w.flush()?;
        Ok(())
    }

    /// Loads records written by [`Enricher::save_cache`]; returns how many.
    pub fn load_cache(&self, path: &Path) -> Result<usize, EnrichmentError> {
        let reader = BufReader::new(File::open(path)?);
        let mut loaded = 0;
        let mut cache = self.cache.write();
        for (i, line) in reader.lines().enumerate() {
            let line = line?;
            if line.trim().is_empty() {
                continue;
            }
            let rec: CacheRecord = serde_json::from_str(&line).map_err(|e| EnrichmentError::CacheFormat {
                line: i + 1,
                message: e.to_string(),
            })?;
            cache.insert((rec.item_id, rec.provider), rec.profile);
            loaded += 1;
        }
        Ok(loaded)
    }
}

impl Default for Enricher {
    fn default() -> Self {
        Self::new(EnrichmentConfig::default())
    }
}
