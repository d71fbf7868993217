//! The stateful engine behind the interactive service: graph, profiles,
//! sessions and the feedback learner, with every mutation written to an
//! append-only log so that a restart replays to the same state.

use std::collections::{BTreeMap, HashMap, HashSet};
use std::path::Path;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::adaptation::{
    compose_presentation, generate_explanation, inject_serendipity, AdaptError, EventKind, EventLog, EventOutcome,
    ExplanationSource, FeedbackLearner, InteractionEvent, LogError, PresentationPlan,
};
use crate::cognition::{complexity_band, CognitiveState, SessionContext};
use crate::config::EngineConfig;
use crate::embed::{fnv1a, HashingEmbedder};
use crate::enrichment::{Enricher, EnrichmentError, RawItem, SemanticProfile};
use crate::eval::{parse_movie_line, MOVIES_FILE};
use crate::graph::{user_key, EdgeType, GraphError, KnowledgeGraph, NodeId, NodeType};
use crate::profiling::{
    create_user, score_questionnaire, write_vark_edges, Demographics, Goal, ProfileError, ProfileStore, DRIFT_HISTORY,
};
use crate::provider::{GenerationProvider, RelevanceScorer};
use crate::recommender::{recommend, retrieval_entities, RankMethod, Ranker, RecommendError};
use crate::vark::{Channel, VarkVector};

/// Entities reported on the profile view.
pub const TOP_ENTITIES: usize = 10;

const DEMO_CATALOG: &str = include_str!("../data/demo_catalog.jsonl");

#[derive(Debug, thiserror::Error)]
pub enum EngineError {
    #[error("unknown user {0}")]
    UnknownUser(String),
    #[error("unknown session {0}")]
    UnknownSession(String),
    #[error("unknown item {0}")]
    UnknownItem(String),
    #[error("invalid request: {0}")]
    Invalid(String),
    #[error("the catalogue is empty")]
    EmptyCatalog,
    #[error(transparent)]
    Profile(#[from] ProfileError),
    #[error(transparent)]
    Adapt(#[from] AdaptError),
    #[error(transparent)]
    Recommend(#[from] RecommendError),
    #[error(transparent)]
    Graph(#[from] GraphError),
    #[error(transparent)]
    Enrichment(#[from] EnrichmentError),
    #[error(transparent)]
    Log(#[from] LogError),
    #[error("catalogue: {0}")]
    Catalog(String),
}

/// One durable state change.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum LogRecord {
    CreateUser {
        user_id: String,
        demographics: Demographics,
        goal: Goal,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        idempotency_key: Option<String>,
        timestamp_ms: i64,
    },
    /// Also the audit trail for questionnaire overwrites.
    Questionnaire {
        user_id: String,
        answers: Vec<Channel>,
        timestamp_ms: i64,
    },
    Session {
        session_id: String,
        user_id: String,
        context: SessionContext,
        timestamp_ms: i64,
    },
    Interaction(InteractionEvent),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ApiSession {
    pub session_id: String,
    pub user_id: String,
    pub context: SessionContext,
    pub created_ms: i64,
    pub state: CognitiveState,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PayloadItem {
    pub rank: usize,
    pub item_id: String,
    pub title: String,
    pub score: f64,
    pub explanation: String,
    pub explanation_source: ExplanationSource,
    pub serendipitous: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RecommendationPayload {
    pub session_id: String,
    pub user_id: String,
    pub items: Vec<PayloadItem>,
    pub plan: PresentationPlan,
    pub cognitive_state: CognitiveState,
    pub method: RankMethod,
    /// A configured provider failed somewhere and a deterministic path was used.
    pub degraded: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EntityWeight {
    pub name: String,
    pub weight: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProfileView {
    pub user_id: String,
    pub demographics: Demographics,
    pub goal: Goal,
    pub vark: VarkVector,
    /// Oldest first; the last entry is the current vector.
    pub drift_history: Vec<VarkVector>,
    pub top_entities: Vec<EntityWeight>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeedbackReceipt {
    pub duplicate: bool,
    pub signal: f64,
    pub refined_vark: Option<VarkVector>,
}

/// Raw items for the engine: a JSON-lines file of [`RawItem`], a MovieLens
/// directory (only `movies.dat` is read), or the built-in demo catalogue.
pub fn load_catalog(path: Option<&Path>) -> Result<Vec<RawItem>, EngineError> {
    let Some(path) = path else {
        return parse_jsonl(DEMO_CATALOG);
    };
    if path.is_dir() {
        let bytes = std::fs::read(path.join(MOVIES_FILE))
            .map_err(|e| EngineError::Catalog(format!("{}: {e}", path.join(MOVIES_FILE).display())))?;
        let text: String = bytes.iter().map(|&b| b as char).collect();
        return Ok(text
            .lines()
            .filter_map(parse_movie_line)
            .map(|m| m.to_raw_item())
            .collect());
    }
    let text = std::fs::read_to_string(path).map_err(|e| EngineError::Catalog(format!("{}: {e}", path.display())))?;
    parse_jsonl(&text)
}

fn parse_jsonl(text: &str) -> Result<Vec<RawItem>, EngineError> {
    text.lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty())
        .map(|(i, l)| serde_json::from_str(l).map_err(|e| EngineError::Catalog(format!("line {}: {e}", i + 1))))
        .collect()
}

pub struct Engine {
    config: EngineConfig,
    graph: KnowledgeGraph,
    profiles: ProfileStore,
    learner: FeedbackLearner,
    sessions: BTreeMap<String, ApiSession>,
    idempotency: HashMap<String, String>,
    seen_events: HashSet<String>,
    users_created: u64,
    generation: Option<Arc<dyn GenerationProvider>>,
    scorer: Option<Arc<dyn RelevanceScorer>>,
    log: Option<EventLog<LogRecord>>,
}

impl Engine {
    /// Enriches `items` with the rule-based enricher and builds the graph.
    pub fn new(config: EngineConfig, items: &[RawItem]) -> Result<Self, EngineError> {
        let enricher = Enricher::new(config.enrichment.clone())
            .with_embedder(Arc::new(HashingEmbedder::new(config.embedding_dim)));
        let profiled = items
            .iter()
            .map(|raw| enricher.enrich_item(raw, None).map(|p| (raw.clone(), p)))
            .collect::<Result<Vec<_>, _>>()?;
        Self::from_profiles(config, &profiled)
    }

    pub fn from_profiles(config: EngineConfig, items: &[(RawItem, SemanticProfile)]) -> Result<Self, EngineError> {
        config.validate().map_err(|e| EngineError::Invalid(e.to_string()))?;
        let embedder = HashingEmbedder::new(config.embedding_dim);
        let mut graph = KnowledgeGraph::with_interaction_rate(config.embedding_dim, config.interaction_rate);
        for (raw, profile) in items {
            graph.upsert_item(raw, profile, &embedder)?;
        }
        Ok(Self {
            learner: FeedbackLearner::new(config.adaptation),
            config,
            graph,
            profiles: ProfileStore::default(),
            sessions: BTreeMap::new(),
            idempotency: HashMap::new(),
            seen_events: HashSet::new(),
            users_created: 0,
            generation: None,
            scorer: None,
            log: None,
        })
    }

    pub fn with_generation(mut self, provider: Arc<dyn GenerationProvider>) -> Self {
        self.generation = Some(provider);
        self
    }

    pub fn with_scorer(mut self, scorer: Arc<dyn RelevanceScorer>) -> Self {
        self.scorer = Some(scorer);
        self
    }

    /// Replays the log at `path` into this engine and keeps appending to it.
    /// Returns the number of records replayed.
    pub fn attach_log(&mut self, path: &Path) -> Result<usize, EngineError> {
        if let Some(dir) = path.parent() {
            std::fs::create_dir_all(dir).map_err(LogError::from)?;
        }
        let (log, records) = EventLog::open(path)?;
        for (i, r) in records.iter().enumerate() {
            if let Err(e) = self.apply(r) {
                // The record failed the same way when first submitted.
                tracing::warn!(index = i, error = %e, "skipping unreplayable log record");
            }
        }
        tracing::info!(records = records.len(), path = %path.display(), "replayed event log");
        self.log = Some(log);
        Ok(records.len())
    }

    pub fn config(&self) -> &EngineConfig {
        &self.config
    }

    pub fn graph(&self) -> &KnowledgeGraph {
        &self.graph
    }

    pub fn profiles(&self) -> &ProfileStore {
        &self.profiles
    }

    pub fn learner(&self) -> &FeedbackLearner {
        &self.learner
    }

    pub fn session(&self, session_id: &str) -> Option<&ApiSession> {
        self.sessions.get(session_id)
    }

    pub fn item_count(&self) -> usize {
        self.graph.item_count()
    }

    /// Durable state used by replay checks: graph, profiles, learner and sessions.
    pub fn same_state(&self, other: &Engine) -> bool {
        self.graph == other.graph
            && self.profiles == other.profiles
            && self.learner == other.learner
            && self.sessions == other.sessions
    }

    fn commit(&mut self, record: LogRecord) -> Result<(), EngineError> {
        if let Some(log) = self.log.as_mut() {
            log.append(&record)?;
        }
        Ok(())
    }

    fn apply(&mut self, record: &LogRecord) -> Result<Option<EventOutcome>, EngineError> {
        match record {
            LogRecord::CreateUser {
                user_id,
                demographics,
                goal,
                idempotency_key,
                ..
            } => {
                let (profile, _, _) = create_user(
                    &mut self.graph,
                    user_id,
                    *demographics,
                    *goal,
                    VarkVector::UNIFORM,
                    fnv1a(user_id.as_bytes()),
                )?;
                self.profiles.insert(profile)?;
                self.users_created += 1;
                if let Some(k) = idempotency_key {
                    self.idempotency.insert(k.clone(), user_id.clone());
                }
                Ok(None)
            }
            LogRecord::Questionnaire { user_id, answers, .. } => {
                let vark = score_questionnaire(answers)?;
                let node = self.user_node(user_id)?;
                self.profiles.reset_vark(user_id, vark)?;
                self.learner.reset_user(user_id);
                let mut delta = Default::default();
                write_vark_edges(&mut self.graph, node, &vark, &mut delta)?;
                Ok(None)
            }
            LogRecord::Session {
                session_id,
                user_id,
                context,
                timestamp_ms,
            } => {
                let vark = self.profile(user_id)?.vark;
                let state = self.config.recommender.cognition.estimate_state(context, &vark);
                self.sessions.insert(
                    session_id.clone(),
                    ApiSession {
                        session_id: session_id.clone(),
                        user_id: user_id.clone(),
                        context: context.clone(),
                        created_ms: *timestamp_ms,
                        state,
                    },
                );
                Ok(None)
            }
            LogRecord::Interaction(event) => {
                let outcome = self.learner.process_event(&mut self.graph, &mut self.profiles, event)?;
                if let Some(id) = &event.client_event_id {
                    self.seen_events.insert(format!("{}\u{1f}{id}", event.user_id));
                }
                Ok(Some(outcome))
            }
        }
    }

    fn profile(&self, user_id: &str) -> Result<&crate::profiling::UserProfile, EngineError> {
        self.profiles
            .profile(user_id)
            .ok_or_else(|| EngineError::UnknownUser(user_id.to_string()))
    }

    fn user_node(&self, user_id: &str) -> Result<NodeId, EngineError> {
        self.graph
            .id_of(&user_key(user_id))
            .ok_or_else(|| EngineError::UnknownUser(user_id.to_string()))
    }

    fn session_ref(&self, session_id: &str) -> Result<&ApiSession, EngineError> {
        self.sessions
            .get(session_id)
            .ok_or_else(|| EngineError::UnknownSession(session_id.to_string()))
    }

    /// Creates a user with a uniform VARK placeholder. A repeated idempotency
    /// key returns the original user and `false`.
    pub fn create_user(
        &mut self,
        demographics: Demographics,
        goal: Goal,
        idempotency_key: Option<String>,
        now_ms: i64,
    ) -> Result<(String, bool), EngineError> {
        if let Some(existing) = idempotency_key.as_ref().and_then(|k| self.idempotency.get(k)) {
            return Ok((existing.clone(), false));
        }
        let user_id = format!("u{}", self.users_created + 1);
        let record = LogRecord::CreateUser {
            user_id: user_id.clone(),
            demographics,
            goal,
            idempotency_key,
            timestamp_ms: now_ms,
        };
        self.apply(&record)?;
        self.commit(record)?;
        Ok((user_id, true))
    }

    /// Scores the answers and overwrites the VARK vector, discarding drift.
    pub fn submit_questionnaire(
        &mut self,
        user_id: &str,
        answers: &[Channel],
        now_ms: i64,
    ) -> Result<VarkVector, EngineError> {
        self.profile(user_id)?;
        let had_answers = self
            .profiles
            .get(user_id)
            .is_some_and(|s| s.profile.vark != VarkVector::UNIFORM);
        let record = LogRecord::Questionnaire {
            user_id: user_id.to_string(),
            answers: answers.to_vec(),
            timestamp_ms: now_ms,
        };
        self.apply(&record)?;
        self.commit(record)?;
        let vark = self.profile(user_id)?.vark;
        tracing::info!(user = user_id, overwrite = had_answers, vark = ?vark.components(), "questionnaire recorded");
        Ok(vark)
    }

    pub fn start_session(
        &mut self,
        user_id: &str,
        context: SessionContext,
        now_ms: i64,
    ) -> Result<ApiSession, EngineError> {
        self.profile(user_id)?;
        if context.hour > 23 || context.day_of_week > 6 {
            return Err(EngineError::Invalid("hour must be 0-23 and day_of_week 0-6".into()));
        }
        if context.available_minutes.is_some_and(|m| !(m.is_finite() && m >= 0.0)) {
            return Err(EngineError::Invalid(
                "available_minutes must be a non-negative number".into(),
            ));
        }
        let session_id = format!("s{}", self.sessions.len() + 1);
        let record = LogRecord::Session {
            session_id: session_id.clone(),
            user_id: user_id.to_string(),
            context,
            timestamp_ms: now_ms,
        };
        self.apply(&record)?;
        self.commit(record)?;
        Ok(self.sessions[&session_id].clone())
    }

    /// Ranks, injects serendipity, plans presentation and explains. Pure with
    /// respect to engine state; see [`Engine::log_impressions`].
    pub fn build_recommendations(&self, session_id: &str, k: usize) -> Result<RecommendationPayload, EngineError> {
        let session = self.session_ref(session_id)?;
        if self.graph.item_count() == 0 {
            return Err(EngineError::EmptyCatalog);
        }
        let profile = self.profile(&session.user_id)?;
        let ranker = match (&self.scorer, &self.generation) {
            (Some(s), _) => Ranker::Scorer(s.as_ref()),
            (None, Some(g)) => Ranker::Provider(g.as_ref()),
            (None, None) => Ranker::Fallback,
        };
        let rec = recommend(
            &self.graph,
            profile,
            &session.context,
            ranker,
            &self.config.recommender,
            k,
        )?;
        let interests = retrieval_entities(&self.graph, profile, &self.config.recommender);
        let user_node = self.graph.id_of(&user_key(&profile.user_id));
        let ser = inject_serendipity(
            &rec.list,
            &self.graph,
            user_node,
            &interests,
            complexity_band(&rec.state),
            self.config.adaptation.serendipity_rate,
            fnv1a(session_id.as_bytes()),
        );
        let plan = compose_presentation(&ser.list, &rec.state);
        let mut degraded = rec.list.degraded;
        let mut items = Vec::with_capacity(ser.list.len());
        for (rank, it) in ser.list.items.iter().enumerate() {
            let node = self
                .graph
                .node(it.node)
                .ok_or_else(|| EngineError::UnknownItem(it.item_id.clone()))?;
            let item_profile = node
                .profile
                .as_ref()
                .ok_or_else(|| EngineError::UnknownItem(it.item_id.clone()))?;
            let exp = generate_explanation(
                &node.name,
                item_profile,
                profile,
                &interests,
                self.generation.as_deref(),
            );
            degraded |= exp.degraded;
            items.push(PayloadItem {
                rank: rank + 1,
                item_id: it.item_id.clone(),
                title: node.name.clone(),
                score: it.score,
                explanation: exp.text,
                explanation_source: exp.source,
                serendipitous: ser.is_injected(it.node),
            });
        }
        Ok(RecommendationPayload {
            session_id: session_id.to_string(),
            user_id: session.user_id.clone(),
            items,
            plan,
            cognitive_state: rec.state,
            method: ser.list.method,
            degraded,
        })
    }

    /// Records an IMPRESSION for every item shown.
    pub fn log_impressions(&mut self, payload: &RecommendationPayload, now_ms: i64) -> Result<(), EngineError> {
        for it in &payload.items {
            let mut ev = InteractionEvent::new(&payload.user_id, &it.item_id, EventKind::Impression, None);
            ev.session_id = Some(payload.session_id.clone());
            ev.timestamp_ms = now_ms;
            let record = LogRecord::Interaction(ev);
            self.apply(&record)?;
            self.commit(record)?;
        }
        Ok(())
    }

    pub fn recommendations(
        &mut self,
        session_id: &str,
        k: usize,
        now_ms: i64,
    ) -> Result<RecommendationPayload, EngineError> {
        let payload = self.build_recommendations(session_id, k)?;
        self.log_impressions(&payload, now_ms)?;
        Ok(payload)
    }

    /// Validates and applies one feedback event. Events repeating a
    /// `client_event_id` already seen for the user are acknowledged and ignored.
    pub fn feedback(
        &mut self,
        session_id: &str,
        item_id: &str,
        kind: EventKind,
        value: Option<f64>,
        client_event_id: Option<String>,
        now_ms: i64,
    ) -> Result<FeedbackReceipt, EngineError> {
        let user_id = self.session_ref(session_id)?.user_id.clone();
        if self.graph.item_id(item_id).is_none() {
            return Err(EngineError::UnknownItem(item_id.to_string()));
        }
        let mut ev = InteractionEvent::new(&user_id, item_id, kind, value);
        ev.session_id = Some(session_id.to_string());
        ev.client_event_id = client_event_id;
        ev.timestamp_ms = now_ms;
        ev.validate()?;
        if let Some(id) = &ev.client_event_id {
            if self.seen_events.contains(&format!("{user_id}\u{1f}{id}")) {
                return Ok(FeedbackReceipt {
                    duplicate: true,
                    signal: 0.0,
                    refined_vark: None,
                });
            }
        }
        let record = LogRecord::Interaction(ev);
        let outcome = self.apply(&record)?.unwrap_or_default();
        self.commit(record)?;
        Ok(FeedbackReceipt {
            duplicate: false,
            signal: outcome.signal,
            refined_vark: outcome.refined_vark,
        })
    }

    /// Current INTERACTED weight between a user and an item.
    pub fn interaction_weight(&self, user_id: &str, item_id: &str) -> Option<f64> {
        let u = self.graph.id_of(&user_key(user_id))?;
        let i = self.graph.item_id(item_id)?;
        self.graph.weight(u, i, EdgeType::Interacted)
    }

    pub fn profile_view(&self, user_id: &str) -> Result<ProfileView, EngineError> {
        let stored = self
            .profiles
            .get(user_id)
            .ok_or_else(|| EngineError::UnknownUser(user_id.to_string()))?;
        let p = &stored.profile;
        let mut history: Vec<VarkVector> = stored.vark_history.iter().copied().collect();
        history.push(p.vark);
        let skip = history.len().saturating_sub(DRIFT_HISTORY);
        let drift_history = history.split_off(skip);

        let node = self.user_node(user_id)?;
        let mut top: Vec<EntityWeight> = self
            .graph
            .out_edges(node)
            .filter(|e| e.key.edge_type == EdgeType::Prefers)
            .filter_map(|e| {
                let n = self.graph.node(e.key.target)?;
                (n.node_type == NodeType::Entity && e.weight > 0.0).then(|| EntityWeight {
                    name: n.name.clone(),
                    weight: e.weight,
                })
            })
            .collect();
        top.sort_by(|a, b| b.weight.total_cmp(&a.weight).then_with(|| a.name.cmp(&b.name)));
        top.truncate(TOP_ENTITIES);
        Ok(ProfileView {
            user_id: p.user_id.clone(),
            demographics: p.demographics,
            goal: p.goal,
            vark: p.vark,
            drift_history,
            top_entities: top,
        })
    }
}

#[cfg(test)]
mod tests;
