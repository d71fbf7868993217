//! Candidate retrieval over the graph and ranking of the resulting pool.
//!
//! Retrieval unions three strategies (embedding neighbours of the user,
//! items linked to goal/profile entities, learning-style alignment), applies
//! the cognitive complexity band, and caps the pool. Ranking is either a
//! fixed-weight feature model, a generation provider asked for an ordered
//! list, or an external relevance scorer over the top of the pool.

mod rank;

use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};

use crate::cognition::{complexity_band, CognitionConfig, CognitiveState, SessionContext};
use crate::graph::{user_key, EdgeType, GraphError, KnowledgeGraph, NodeId, NodeType};
use crate::profiling::{Goal, UserProfile};
use crate::provider::{GenerationProvider, ProviderError, RelevanceScorer};

pub use rank::{
    build_ranking_prompt, fit_fallback_weights, parse_ranking_response, rank_candidates_only, rank_fallback,
    rank_with_provider, rank_with_scorer, ParseWarning, RankMethod, RankedItem, RankedList,
};

#[derive(Debug, thiserror::Error)]
pub enum RecommendError {
    #[error("the catalog has no items")]
    EmptyCatalog,
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
    #[error(transparent)]
    Provider(#[from] ProviderError),
    #[error("ranking response unusable: {0}")]
    Parse(String),
    #[error(transparent)]
    Graph(#[from] GraphError),
}

/// Strategy sizes for retrieval.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PoolSizes {
    pub semantic: usize,
    pub entity: usize,
    pub vark: usize,
}

impl Default for PoolSizes {
    fn default() -> Self {
        Self {
            semantic: 300,
            entity: 500,
            vark: 400,
        }
    }
}

/// Weights of the fallback ranker's features: text, graph, vark, cf.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct FallbackWeights {
    pub text: f64,
    pub graph: f64,
    pub vark: f64,
    pub cf: f64,
}

impl Default for FallbackWeights {
    fn default() -> Self {
        Self {
            text: 0.3,
            graph: 0.3,
            vark: 0.3,
            cf: 0.1,
        }
    }
}

impl FallbackWeights {
    pub fn as_array(&self) -> [f64; 4] {
        [self.text, self.graph, self.vark, self.cf]
    }

    pub fn from_array(w: [f64; 4]) -> Self {
        Self {
            text: w[0],
            graph: w[1],
            vark: w[2],
            cf: w[3],
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct RecommenderConfig {
    pub sizes: PoolSizes,
    pub max_pool: usize,
    pub weights: FallbackWeights,
    /// Candidates described to a generation provider; the rest of the pool
    /// is ranked by the fallback model.
    pub prompt_budget: usize,
    /// Candidates sent to a relevance scorer.
    pub rerank_depth: usize,
    pub apply_cognitive_filter: bool,
    pub exclude_interacted: bool,
    /// Entity names retrieved for each goal.
    pub goal_entities: BTreeMap<Goal, Vec<String>>,
    /// Entity names retrieved for MovieLens age bracket codes.
    pub age_entities: BTreeMap<u8, Vec<String>>,
    pub cognition: CognitionConfig,
}

impl Default for RecommenderConfig {
    fn default() -> Self {
        let names = |xs: &[&str]| xs.iter().map(|s| s.to_string()).collect::<Vec<_>>();
        Self {
            sizes: PoolSizes::default(),
            max_pool: 1000,
            weights: FallbackWeights::default(),
            prompt_budget: 50,
            rerank_depth: 100,
            apply_cognitive_filter: true,
            exclude_interacted: true,
            goal_entities: BTreeMap::from([
                (Goal::Learning, names(&["documentary", "drama", "war"])),
                (Goal::Research, names(&["documentary", "mystery", "film-noir"])),
                (
                    Goal::Entertainment,
                    names(&["comedy", "action", "adventure", "animation"]),
                ),
                (Goal::Purchase, names(&["action", "comedy", "romance"])),
            ]),
            age_entities: BTreeMap::from([(1, names(&["children's", "animation"]))]),
            cognition: CognitionConfig::default(),
        }
    }
}

/// Which strategies retrieved a candidate.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct Provenance {
    pub semantic: bool,
    pub entity: bool,
    pub vark: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Candidate {
    pub node: NodeId,
    pub item_id: String,
    pub complexity: u8,
    /// Cosine between user and item embeddings.
    pub semantic: f64,
    /// Summed edge weight to the retrieval entities.
    pub entity: f64,
    /// Dot product of item alignment and user VARK.
    pub vark: f64,
    /// Co-interaction similarity to the user's liked items; 0 for cold users.
    pub cf: f64,
    /// TF-IDF similarity between the user's interest text and the item.
    pub text: f64,
    /// Min-max normalized strategy scores within the pool.
    pub norm_semantic: f64,
    pub norm_entity: f64,
    pub norm_vark: f64,
    pub provenance: Provenance,
}

impl Candidate {
    /// Sum of normalized strategy scores; orders the pool.
    pub fn combined(&self) -> f64 {
        self.norm_semantic + self.norm_entity + self.norm_vark
    }

    /// Graph feature for the fallback ranker: embedding neighbourhood and
    /// entity linkage, equally weighted.
    pub fn graph_feature(&self) -> f64 {
        0.5 * self.norm_semantic + 0.5 * self.norm_entity
    }

    pub fn features(&self) -> [f64; 4] {
        [self.text, self.graph_feature(), self.vark, self.cf]
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CandidatePool {
    /// Ordered by combined score descending, then node id.
    pub entries: Vec<Candidate>,
    pub band: (u8, u8),
    /// The complexity band removed every candidate and was widened to 1–5.
    pub relaxed_filter: bool,
    pub retrieval_entities: Vec<String>,
    pub query_text: String,
}

impl CandidatePool {
    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn get(&self, node: NodeId) -> Option<&Candidate> {
        self.entries.iter().find(|c| c.node == node)
    }
}

/// Entity names used for entity retrieval: goal table, age table, then
/// entities the user has a positive PREFERS edge to.
pub fn retrieval_entities(graph: &KnowledgeGraph, profile: &UserProfile, config: &RecommenderConfig) -> Vec<String> {
    let mut out: Vec<String> = Vec::new();
    let push = |s: &str, out: &mut Vec<String>| {
        let n = crate::enrichment::normalize_entity_name(s);
        if !n.is_empty() && !out.contains(&n) {
            out.push(n);
        }
    };
    for e in config.goal_entities.get(&profile.goal).into_iter().flatten() {
        push(e, &mut out);
    }
    for e in config.age_entities.get(&profile.demographics.age).into_iter().flatten() {
        push(e, &mut out);
    }
    if let Some(uid) = graph.id_of(&user_key(&profile.user_id)) {
        let mut prefs: Vec<(NodeId, f64)> = graph
            .out_edges(uid)
            .filter(|e| e.key.edge_type == EdgeType::Prefers && e.weight > 0.0)
            .filter(|e| graph.node(e.key.target).map(|n| n.node_type) == Some(NodeType::Entity))
            .map(|e| (e.key.target, e.weight))
            .collect();
        prefs.sort_by(|a, b| b.1.total_cmp(&a.1).then(a.0.cmp(&b.0)));
        for (id, _) in prefs {
            push(&graph.node(id).expect("edge endpoint exists").name, &mut out);
        }
    }
    out
}

const LIKED: f64 = 0.5;

fn liked_by(graph: &KnowledgeGraph, item: NodeId) -> BTreeSet<NodeId> {
    graph
        .in_edges(item)
        .filter(|e| e.key.edge_type == EdgeType::Interacted && e.weight > LIKED)
        .map(|e| e.key.source)
        .collect()
}

/// Items the user interacted with, split into (all, liked).
fn user_history(graph: &KnowledgeGraph, user: Option<NodeId>) -> (BTreeSet<NodeId>, Vec<NodeId>) {
    let Some(uid) = user else {
        return (BTreeSet::new(), Vec::new());
    };
    let mut all = BTreeSet::new();
    let mut liked = Vec::new();
    for e in graph.out_edges(uid) {
        if e.key.edge_type == EdgeType::Interacted {
            all.insert(e.key.target);
            if e.weight > LIKED {
                liked.push(e.key.target);
            }
        }
    }
    (all, liked)
}

/// Cosine of co-interaction sets, maximised over the user's liked items.
fn cf_score(graph: &KnowledgeGraph, item: NodeId, user: NodeId, liked: &[(NodeId, BTreeSet<NodeId>)]) -> f64 {
    if liked.is_empty() {
        return 0.0;
    }
    let mut ui = liked_by(graph, item);
    ui.remove(&user);
    if ui.is_empty() {
        return 0.0;
    }
    liked
        .iter()
        .filter(|(j, _)| *j != item)
        .map(|(_, uj)| {
            let shared = ui.intersection(uj).count() as f64;
            if uj.is_empty() {
                0.0
            } else {
                shared / ((ui.len() * uj.len()) as f64).sqrt()
            }
        })
        .fold(0.0, f64::max)
}

fn min_max(values: &[f64]) -> Vec<f64> {
    let lo = values.iter().cloned().fold(f64::INFINITY, f64::min);
    let hi = values.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let range = hi - lo;
    values
        .iter()
        .map(|v| if range > 0.0 { (v - lo) / range } else { 0.0 })
        .collect()
}

fn item_complexity(graph: &KnowledgeGraph, id: NodeId) -> u8 {
    graph.profile(id).map(|p| p.complexity).unwrap_or(3)
}

fn item_vark_score(graph: &KnowledgeGraph, id: NodeId, profile: &UserProfile) -> f64 {
    graph
        .profile(id)
        .map(|p| p.vark_alignment.dot(&profile.vark))
        .unwrap_or(0.0)
}

/// Builds the candidate pool for a user in a session state.
pub fn generate_candidates(
    graph: &KnowledgeGraph,
    profile: &UserProfile,
    state: &CognitiveState,
    config: &RecommenderConfig,
) -> Result<CandidatePool, RecommendError> {
    if graph.item_count() == 0 {
        return Err(RecommendError::EmptyCatalog);
    }
    if profile.embedding.len() != graph.dim() {
        return Err(GraphError::DimensionMismatch {
            expected: graph.dim(),
            got: profile.embedding.len(),
        }
        .into());
    }
    let user_node = graph.id_of(&user_key(&profile.user_id));
    let (seen, liked) = user_history(graph, user_node);
    let allowed = |id: NodeId| !(config.exclude_interacted && seen.contains(&id));

    let mut prov: BTreeMap<NodeId, Provenance> = BTreeMap::new();
    if config.sizes.semantic > 0 {
        let filter = |n: &crate::graph::Node| allowed(n.id);
        for (id, _) in graph.knn_items(&profile.embedding, config.sizes.semantic, Some(&filter))? {
            prov.entry(id).or_default().semantic = true;
        }
    }
    let entities = retrieval_entities(graph, profile, config);
    let entity_scores: BTreeMap<NodeId, f64> = graph
        .items_for_entities(&entities, usize::MAX)
        .into_iter()
        .filter(|(id, _)| allowed(*id))
        .collect();
    if config.sizes.entity > 0 {
        let mut ranked: Vec<(NodeId, f64)> = entity_scores.iter().map(|(k, v)| (*k, *v)).collect();
        ranked.sort_by(|a, b| b.1.total_cmp(&a.1).then(a.0.cmp(&b.0)));
        for (id, _) in ranked.into_iter().take(config.sizes.entity) {
            prov.entry(id).or_default().entity = true;
        }
    }
    if config.sizes.vark > 0 {
        let mut ranked: Vec<(NodeId, f64)> = graph
            .item_ids()
            .filter(|id| allowed(*id))
            .map(|id| (id, item_vark_score(graph, id, profile)))
            .collect();
        ranked.sort_by(|a, b| b.1.total_cmp(&a.1).then(a.0.cmp(&b.0)));
        for (id, _) in ranked.into_iter().take(config.sizes.vark) {
            prov.entry(id).or_default().vark = true;
        }
    }

    let band = if config.apply_cognitive_filter {
        complexity_band(state)
    } else {
        (1, 5)
    };
    let in_band = |id: &NodeId| {
        let c = item_complexity(graph, *id);
        band.0 <= c && c <= band.1
    };
    let mut members: Vec<NodeId> = prov.keys().copied().filter(in_band).collect();
    let relaxed_filter = members.is_empty() && !prov.is_empty();
    if relaxed_filter {
        tracing::debug!(user = %profile.user_id, ?band, "complexity band emptied the pool, relaxing");
        members = prov.keys().copied().collect();
    }

    let query_text = entities.join(" ");
    let liked_sets: Vec<(NodeId, BTreeSet<NodeId>)> = match user_node {
        Some(uid) => liked
            .iter()
            .map(|j| {
                let mut s = liked_by(graph, *j);
                s.remove(&uid);
                (*j, s)
            })
            .collect(),
        None => Vec::new(),
    };
    let mut entries: Vec<Candidate> = members
        .iter()
        .map(|&id| Candidate {
            node: id,
            item_id: graph.external_item_id(id).unwrap_or_default().to_string(),
            complexity: item_complexity(graph, id),
            semantic: graph.item_similarity(id, &profile.embedding).unwrap_or(0.0),
            entity: entity_scores.get(&id).copied().unwrap_or(0.0),
            vark: item_vark_score(graph, id, profile),
            cf: user_node.map_or(0.0, |u| cf_score(graph, id, u, &liked_sets)),
            text: graph.text_similarity(&query_text, id),
            norm_semantic: 0.0,
            norm_entity: 0.0,
            norm_vark: 0.0,
            provenance: prov[&id],
        })
        .collect();
    normalize_pool(&mut entries);
    entries.sort_by(|a, b| b.combined().total_cmp(&a.combined()).then(a.node.cmp(&b.node)));
    if entries.len() > config.max_pool {
        entries.truncate(config.max_pool);
        // Normalization is relative to the pool that is kept.
        normalize_pool(&mut entries);
        entries.sort_by(|a, b| b.combined().total_cmp(&a.combined()).then(a.node.cmp(&b.node)));
    }
    Ok(CandidatePool {
        entries,
        band: if relaxed_filter { (1, 5) } else { band },
        relaxed_filter,
        retrieval_entities: entities,
        query_text,
    })
}

fn normalize_pool(entries: &mut [Candidate]) {
    let sem = min_max(&entries.iter().map(|c| c.semantic).collect::<Vec<_>>());
    let ent = min_max(&entries.iter().map(|c| c.entity).collect::<Vec<_>>());
    let vark = min_max(&entries.iter().map(|c| c.vark).collect::<Vec<_>>());
    for (i, c) in entries.iter_mut().enumerate() {
        c.norm_semantic = sem[i];
        c.norm_entity = ent[i];
        c.norm_vark = vark[i];
    }
}

/// How the final list is ordered.
pub enum Ranker<'a> {
    Fallback,
    /// Pool order (summed normalized strategy scores), no reranking.
    CandidatesOnly,
    Provider(&'a dyn GenerationProvider),
    Scorer(&'a dyn RelevanceScorer),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Recommendation {
    pub list: RankedList,
    pub state: CognitiveState,
    pub pool_size: usize,
    pub relaxed_filter: bool,
}

/// Session state, retrieval and ranking in one call. Provider failures fall
/// back to the feature ranker and mark the list degraded.
pub fn recommend(
    graph: &KnowledgeGraph,
    profile: &UserProfile,
    ctx: &SessionContext,
    ranker: Ranker<'_>,
    config: &RecommenderConfig,
    k: usize,
) -> Result<Recommendation, RecommendError> {
    if k == 0 {
        return Err(RecommendError::InvalidArgument("k must be at least 1".into()));
    }
    let state = config.cognition.estimate_state(ctx, &profile.vark);
    let pool = generate_candidates(graph, profile, &state, config)?;
    let list = match ranker {
        Ranker::Fallback => rank_fallback(&pool, &config.weights, k),
        Ranker::CandidatesOnly => rank_candidates_only(&pool, k),
        Ranker::Provider(p) => match rank_with_provider(&pool, profile, &state, graph, p, config, k) {
            Ok(l) => l,
            Err(e) => {
                tracing::warn!(provider = p.identity(), error = %e, "ranking provider failed, using fallback");
                let mut l = rank_fallback(&pool, &config.weights, k);
                l.degraded = true;
                l
            }
        },
        Ranker::Scorer(s) => match rank_with_scorer(&pool, profile, graph, s, config, k) {
            Ok(l) => l,
            Err(e) => {
                tracing::warn!(scorer = s.identity(), error = %e, "relevance scorer failed, using fallback");
                let mut l = rank_fallback(&pool, &config.weights, k);
                l.degraded = true;
                l
            }
        },
    };
    Ok(Recommendation {
        list,
        state,
        pool_size: pool.len(),
        relaxed_filter: pool.relaxed_filter,
    })
}

#[cfg(test)]
mod tests;
