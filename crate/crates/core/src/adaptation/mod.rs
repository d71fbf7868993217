//! Closing the loop: explanations, presentation, serendipity and the
//! feedback learner that turns interaction events into profile and graph
//! updates.

mod explain;
mod log;
mod present;

#[cfg(test)]
mod tests;

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::graph::{GraphDelta, GraphError, KnowledgeGraph};
use crate::profiling::{
    refine_vark, update_embedding, write_vark_edges, ProfileError, ProfileStore, DEFAULT_DRIFT_RATE,
    DEFAULT_EMBEDDING_RATE,
};
use crate::vark::{Channel, VarkVector};

pub use explain::{
    build_explanation_prompt, generate_explanation, sentence_count, template_explanation, Explanation,
    ExplanationSource,
};
pub use log::{EventLog, LogError};
pub use present::{
    compose_presentation, detail_for_capacity, emphasis_for, entity_affinity, entity_neighbourhood_items,
    initial_visible, inject_serendipity, serendipity_slots, top_decile_entities, DetailLevel, EmphasisMode, Injection,
    ItemDirective, PresentationPlan, SerendipityResult, MIN_VISIBLE,
};

#[derive(Debug, thiserror::Error)]
pub enum AdaptError {
    #[error("unknown user {0}")]
    UnknownUser(String),
    #[error("unknown item {0}")]
    UnknownItem(String),
    #[error("invalid event: {0}")]
    InvalidEvent(String),
    #[error(transparent)]
    Graph(#[from] GraphError),
    #[error(transparent)]
    Profile(#[from] ProfileError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum EventKind {
    Impression,
    Click,
    ViewTime,
    Rating,
    Skip,
    Wishlist,
    Complete,
}

impl EventKind {
    pub const ALL: [EventKind; 7] = [
        EventKind::Impression,
        EventKind::Click,
        EventKind::ViewTime,
        EventKind::Rating,
        EventKind::Skip,
        EventKind::Wishlist,
        EventKind::Complete,
    ];
}

/// One interaction. `value` carries the star rating for `RATING` and the
/// seconds watched for `VIEW_TIME`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InteractionEvent {
    pub user_id: String,
    pub item_id: String,
    pub kind: EventKind,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub value: Option<f64>,
    /// Milliseconds since the Unix epoch.
    #[serde(default)]
    pub timestamp_ms: i64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub session_id: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub client_event_id: Option<String>,
}

impl InteractionEvent {
    pub fn new(user_id: &str, item_id: &str, kind: EventKind, value: Option<f64>) -> Self {
        Self {
            user_id: user_id.to_string(),
            item_id: item_id.to_string(),
            kind,
            value,
            timestamp_ms: 0,
            session_id: None,
            client_event_id: None,
        }
    }

    pub fn validate(&self) -> Result<(), AdaptError> {
        let bad = |m: String| Err(AdaptError::InvalidEvent(m));
        match (self.kind, self.value) {
            (EventKind::Rating, Some(r)) if (1.0..=5.0).contains(&r) => Ok(()),
            (EventKind::Rating, Some(r)) => bad(format!("rating {r} outside [1, 5]")),
            (EventKind::Rating, None) => bad("RATING requires a value".into()),
            (EventKind::ViewTime, Some(s)) if s.is_finite() && s >= 0.0 => Ok(()),
            (EventKind::ViewTime, Some(s)) => bad(format!("view time {s} must be a non-negative number")),
            (EventKind::ViewTime, None) => bad("VIEW_TIME requires a value in seconds".into()),
            (_, _) => Ok(()),
        }
    }

    pub fn signal(&self) -> f64 {
        signal(self.kind, self.value)
    }
}

/// Engagement signal in `[-1, 1]` for an event.
pub fn signal(kind: EventKind, value: Option<f64>) -> f64 {
    match kind {
        EventKind::Impression => 0.0,
        EventKind::Click => 0.3,
        EventKind::Wishlist => 0.6,
        EventKind::Complete => 0.8,
        EventKind::Skip => -0.4,
        EventKind::Rating => ((value.unwrap_or(3.0).clamp(1.0, 5.0) - 3.0) / 2.0).clamp(-1.0, 1.0),
        EventKind::ViewTime => (value.unwrap_or(0.0).max(0.0) / 600.0).min(1.0) * 0.5,
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct AdaptationConfig {
    /// λ in the embedding update.
    pub embedding_rate: f64,
    /// ρ in the VARK refinement.
    pub drift_rate: f64,
    /// Signal-bearing events between VARK refinements.
    pub refine_every: u32,
    pub serendipity_rate: f64,
}

impl Default for AdaptationConfig {
    fn default() -> Self {
        Self {
            embedding_rate: DEFAULT_EMBEDDING_RATE,
            drift_rate: DEFAULT_DRIFT_RATE,
            refine_every: 10,
            serendipity_rate: 0.1,
        }
    }
}

/// Per-user engagement bookkeeping, exposed for calibrating the cognition
/// tables by hand.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct EngagementStats {
    pub events_by_kind: BTreeMap<EventKind, u64>,
    /// Positive engagement summed per item channel since the last refinement.
    pub channel_sum: [f64; 4],
    pub channel_count: [u64; 4],
    pub since_refine: u32,
    pub refinements: u32,
    pub signal_sum: f64,
}

impl EngagementStats {
    /// Mean positive engagement per channel; zero for unseen channels.
    pub fn channel_means(&self) -> [f64; 4] {
        std::array::from_fn(|i| match self.channel_count[i] {
            0 => 0.0,
            n => self.channel_sum[i] / n as f64,
        })
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct EventOutcome {
    pub signal: f64,
    pub delta: GraphDelta,
    pub embedding_updated: bool,
    pub refined_vark: Option<VarkVector>,
}

/// Applies interaction events to the graph and the profile store.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct FeedbackLearner {
    config: AdaptationConfig,
    stats: BTreeMap<String, EngagementStats>,
}

impl FeedbackLearner {
    pub fn new(config: AdaptationConfig) -> Self {
        Self {
            config,
            stats: BTreeMap::new(),
        }
    }

    pub fn config(&self) -> &AdaptationConfig {
        &self.config
    }

    pub fn stats(&self, user_id: &str) -> Option<&EngagementStats> {
        self.stats.get(user_id)
    }

    /// Clears accumulated engagement, e.g. after a questionnaire overwrite.
    pub fn reset_user(&mut self, user_id: &str) {
        self.stats.remove(user_id);
    }

    /// Impressions are only counted. Every other event updates the
    /// INTERACTED and PREFERS edges, blends the item embedding into the
    /// user's (skipped when the signal is zero) and accumulates engagement
    /// for the item's dominant channel. Every `refine_every` such events the
    /// VARK vector is refined from the per-channel means.
    pub fn process_event(
        &mut self,
        graph: &mut KnowledgeGraph,
        profiles: &mut ProfileStore,
        event: &InteractionEvent,
    ) -> Result<EventOutcome, AdaptError> {
        event.validate()?;
        let user = profiles
            .profile(&event.user_id)
            .ok_or_else(|| AdaptError::UnknownUser(event.user_id.clone()))?
            .clone();
        let uid = graph
            .id_of(&crate::graph::user_key(&event.user_id))
            .ok_or_else(|| AdaptError::UnknownUser(event.user_id.clone()))?;
        let iid = graph
            .item_id(&event.item_id)
            .ok_or_else(|| AdaptError::UnknownItem(event.item_id.clone()))?;
        let s = event.signal();
        let stats = self.stats.entry(event.user_id.clone()).or_default();
        *stats.events_by_kind.entry(event.kind).or_default() += 1;
        let mut outcome = EventOutcome {
            signal: s,
            ..Default::default()
        };
        if event.kind == EventKind::Impression {
            return Ok(outcome);
        }

        outcome.delta = graph.apply_interaction(uid, iid, s)?;
        if s != 0.0 {
            let item_emb = &graph.node(iid).expect("item exists").embedding;
            let updated = update_embedding(&user.embedding, item_emb, s, self.config.embedding_rate)?;
            if updated != user.embedding {
                graph.set_embedding(uid, updated.clone())?;
                profiles.set_embedding(&event.user_id, updated)?;
                outcome.embedding_updated = true;
            }
        }

        let channel = graph
            .profile(iid)
            .map(|p| p.vark_alignment.argmax())
            .unwrap_or(Channel::Reading);
        stats.channel_sum[channel.index()] += s.max(0.0);
        stats.channel_count[channel.index()] += 1;
        stats.signal_sum += s;
        stats.since_refine += 1;
        if self.config.refine_every > 0 && stats.since_refine >= self.config.refine_every {
            let means = stats.channel_means();
            stats.channel_sum = [0.0; 4];
            stats.channel_count = [0; 4];
            stats.since_refine = 0;
            let refined = refine_vark(&user.vark, means, self.config.drift_rate);
            if refined != user.vark {
                stats.refinements += 1;
                profiles.set_vark(&event.user_id, refined)?;
                write_vark_edges(graph, uid, &refined, &mut outcome.delta)?;
                outcome.refined_vark = Some(refined);
            }
        }
        Ok(outcome)
    }
}
