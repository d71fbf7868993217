//! Presentation plans and serendipity injection.

use std::collections::{BTreeMap, BTreeSet};

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::cognition::CognitiveState;
use crate::graph::{EdgeType, KnowledgeGraph, NodeId, NodeType};
use crate::recommender::{RankedItem, RankedList};
use crate::vark::Channel;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum EmphasisMode {
    Visual,
    Audio,
    Text,
    Interactive,
}

impl EmphasisMode {
    pub fn for_channel(c: Channel) -> Self {
        match c {
            Channel::Visual => EmphasisMode::Visual,
            Channel::Auditory => EmphasisMode::Audio,
            Channel::Reading => EmphasisMode::Text,
            Channel::Kinesthetic => EmphasisMode::Interactive,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum DetailLevel {
    Minimal,
    Compact,
    Full,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ItemDirective {
    pub item_id: String,
    pub emphasis: EmphasisMode,
    pub detail: DetailLevel,
    pub visible: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PresentationPlan {
    pub emphasis: EmphasisMode,
    pub detail: DetailLevel,
    pub initial_visible: usize,
    pub items: Vec<ItemDirective>,
}

pub const MIN_VISIBLE: usize = 3;

pub fn detail_for_capacity(capacity: f64) -> DetailLevel {
    if capacity >= 0.7 {
        DetailLevel::Full
    } else if capacity >= 0.4 {
        DetailLevel::Compact
    } else {
        DetailLevel::Minimal
    }
}

/// Largest presentation weight; any tie for the maximum falls back to text.
pub fn emphasis_for(state: &CognitiveState) -> EmphasisMode {
    let p = state.presentation;
    let max = p.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let winners: Vec<Channel> = Channel::ALL.into_iter().filter(|c| p[c.index()] == max).collect();
    match winners.as_slice() {
        [one] => EmphasisMode::for_channel(*one),
        _ => EmphasisMode::Text,
    }
}

/// `ceil(attention · n)` items shown first, at least three (or all when
/// the list is shorter).
pub fn initial_visible(attention: f64, n: usize) -> usize {
    let raw = (attention.clamp(0.0, 1.0) * n as f64 - 1e-9).ceil().max(0.0) as usize;
    raw.max(MIN_VISIBLE).min(n)
}

pub fn compose_presentation(list: &RankedList, state: &CognitiveState) -> PresentationPlan {
    let emphasis = emphasis_for(state);
    let detail = detail_for_capacity(state.capacity);
    let visible = initial_visible(state.attention, list.len());
    PresentationPlan {
        emphasis,
        detail,
        initial_visible: visible,
        items: list
            .items
            .iter()
            .enumerate()
            .map(|(i, it)| ItemDirective {
                item_id: it.item_id.clone(),
                emphasis,
                detail,
                visible: i < visible,
            })
            .collect(),
    }
}

/// Entity affinities of a user: PREFERS edge weights plus one for every
/// interest entity.
pub fn entity_affinity(graph: &KnowledgeGraph, user: Option<NodeId>, interests: &[String]) -> BTreeMap<NodeId, f64> {
    let mut out: BTreeMap<NodeId, f64> = BTreeMap::new();
    if let Some(u) = user {
        for e in graph.out_edges(u) {
            let is_entity = graph.node(e.key.target).map(|n| n.node_type) == Some(NodeType::Entity);
            if e.key.edge_type == EdgeType::Prefers && is_entity && e.weight > 0.0 {
                *out.entry(e.key.target).or_default() += e.weight;
            }
        }
    }
    for name in interests {
        if let Some(id) = graph.entity_id(name) {
            *out.entry(id).or_default() += 1.0;
        }
    }
    out
}

/// The top tenth of positive-affinity entities (at least one), ties included.
pub fn top_decile_entities(affinity: &BTreeMap<NodeId, f64>) -> BTreeSet<NodeId> {
    let mut vals: Vec<f64> = affinity.values().copied().filter(|v| *v > 0.0).collect();
    if vals.is_empty() {
        return BTreeSet::new();
    }
    vals.sort_by(|a, b| b.total_cmp(a));
    let keep = vals.len().div_ceil(10);
    let cutoff = vals[keep - 1];
    affinity
        .iter()
        .filter(|(_, v)| **v >= cutoff && **v > 0.0)
        .map(|(k, _)| *k)
        .collect()
}

/// Items linked to any of the given entities.
pub fn entity_neighbourhood_items(graph: &KnowledgeGraph, entities: &BTreeSet<NodeId>) -> BTreeSet<NodeId> {
    entities
        .iter()
        .flat_map(|e| graph.entity_items(*e).into_keys())
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Injection {
    pub rank: usize,
    pub replaced: NodeId,
    pub injected: NodeId,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SerendipityResult {
    pub list: RankedList,
    pub injections: Vec<Injection>,
}

impl SerendipityResult {
    pub fn is_injected(&self, node: NodeId) -> bool {
        self.injections.iter().any(|i| i.injected == node)
    }
}

/// Number of slots replaced at a given rate.
pub fn serendipity_slots(rate: f64, k: usize) -> usize {
    ((rate.clamp(0.0, 1.0) * k as f64) + 1e-9).floor() as usize
}

/// Replaces the lowest-ranked `floor(rate·K)` items with seeded picks from
/// outside the user's top-decile entity neighbourhood whose complexity lies
/// in `band`. Fewer novel items than slots means fewer replacements.
pub fn inject_serendipity(
    list: &RankedList,
    graph: &KnowledgeGraph,
    user: Option<NodeId>,
    interests: &[String],
    band: (u8, u8),
    rate: f64,
    seed: u64,
) -> SerendipityResult {
    let slots = serendipity_slots(rate, list.len());
    if slots == 0 {
        return SerendipityResult {
            list: list.clone(),
            injections: Vec::new(),
        };
    }
    let core = top_decile_entities(&entity_affinity(graph, user, interests));
    let familiar = entity_neighbourhood_items(graph, &core);
    let listed: BTreeSet<NodeId> = list.items.iter().map(|i| i.node).collect();
    let mut novel: Vec<NodeId> = graph
        .item_ids()
        .filter(|id| !familiar.contains(id) && !listed.contains(id))
        .filter(|id| {
            let c = graph.profile(*id).map(|p| p.complexity).unwrap_or(3);
            band.0 <= c && c <= band.1
        })
        .collect();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    novel.shuffle(&mut rng);
    let n = slots.min(novel.len());
    if n < slots {
        tracing::debug!(
            wanted = slots,
            available = novel.len(),
            "too few novel items for serendipity"
        );
    }
    let mut out = list.clone();
    let mut injections = Vec::new();
    let len = out.items.len();
    for (j, &pick) in novel.iter().take(n).enumerate() {
        let rank = len - n + j;
        let slot = &mut out.items[rank];
        injections.push(Injection {
            rank,
            replaced: slot.node,
            injected: pick,
        });
        *slot = RankedItem {
            node: pick,
            item_id: graph.external_item_id(pick).unwrap_or_default().to_string(),
            score: slot.score,
            justification: Some("serendipitous pick outside your usual themes".into()),
        };
    }
    SerendipityResult { list: out, injections }
}
