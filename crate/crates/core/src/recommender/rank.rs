use std::collections::{BTreeMap, BTreeSet};
use std::fmt::Write as _;
use std::sync::LazyLock;

use nalgebra::{DMatrix, DVector};
use regex::Regex;
use serde::{Deserialize, Serialize};

use super::{Candidate, CandidatePool, FallbackWeights, RecommendError, RecommenderConfig};
use crate::cognition::CognitiveState;
use crate::graph::{KnowledgeGraph, NodeId};
use crate::profiling::UserProfile;
use crate::provider::{DecodingParams, GenerationProvider, RelevanceScorer};
use crate::vark::Channel;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RankMethod {
    Fallback,
    CandidatesOnly,
    Provider,
    Scorer,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RankedItem {
    pub node: NodeId,
    pub item_id: String,
    pub score: f64,
    pub justification: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ParseWarning {
    pub line: usize,
    pub message: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RankedList {
    pub items: Vec<RankedItem>,
    pub method: RankMethod,
    /// A configured provider failed and the fallback ranker was used.
    pub degraded: bool,
    pub warnings: Vec<ParseWarning>,
}

impl RankedList {
    pub fn len(&self) -> usize {
        self.items.len()
    }

    pub fn is_empty(&self) -> bool {
        self.items.is_empty()
    }

    pub fn item_ids(&self) -> Vec<&str> {
        self.items.iter().map(|i| i.item_id.as_str()).collect()
    }

    pub fn nodes(&self) -> Vec<NodeId> {
        self.items.iter().map(|i| i.node).collect()
    }
}

fn fallback_score(c: &Candidate, w: &FallbackWeights) -> f64 {
    let f = c.features();
    let w = w.as_array();
    (0..4).map(|i| f[i] * w[i]).sum()
}

/// Pool sorted by fallback score, descending, ties by node id.
fn fallback_order<'a>(pool: &'a CandidatePool, weights: &FallbackWeights) -> Vec<(&'a Candidate, f64)> {
    let mut scored: Vec<(&Candidate, f64)> = pool.entries.iter().map(|c| (c, fallback_score(c, weights))).collect();
    scored.sort_by(|a, b| b.1.total_cmp(&a.1).then(a.0.node.cmp(&b.0.node)));
    scored
}

fn ranked(c: &Candidate, score: f64, justification: Option<String>) -> RankedItem {
    RankedItem {
        node: c.node,
        item_id: c.item_id.clone(),
        score,
        justification,
    }
}

/// `w_text·text + w_graph·graph + w_vark·vark + w_cf·cf`.
pub fn rank_fallback(pool: &CandidatePool, weights: &FallbackWeights, k: usize) -> RankedList {
    RankedList {
        items: fallback_order(pool, weights)
            .into_iter()
            .take(k)
            .map(|(c, s)| ranked(c, s, None))
            .collect(),
        method: RankMethod::Fallback,
        degraded: false,
        warnings: Vec::new(),
    }
}

/// The pool's own order: summed normalized strategy scores.
pub fn rank_candidates_only(pool: &CandidatePool, k: usize) -> RankedList {
    RankedList {
        items: pool
            .entries
            .iter()
            .take(k)
            .map(|c| ranked(c, c.combined(), None))
            .collect(),
        method: RankMethod::CandidatesOnly,
        degraded: false,
        warnings: Vec::new(),
    }
}

fn channel_summary(weights: [f64; 4]) -> String {
    Channel::ALL
        .iter()
        .map(|c| format!("{}={:.2}", c.letter(), weights[c.index()]))
        .collect::<Vec<_>>()
        .join(" ")
}

/// Compact text description of an item for prompts and scorers.
pub(crate) fn item_digest(graph: &KnowledgeGraph, node: NodeId) -> String {
    let Some(n) = graph.node(node) else {
        return String::new();
    };
    let mut s = n.name.clone();
    if let Some(p) = &n.profile {
        let ents: Vec<&str> = p.entities.iter().take(6).map(|e| e.name.as_str()).collect();
        let _ = write!(
            s,
            "; entities: {}; complexity {}; style {}",
            ents.join(", "),
            p.complexity,
            channel_summary(p.vark_alignment.components())
        );
    }
    s
}

fn user_summary(profile: &UserProfile, state: &CognitiveState, interests: &str) -> String {
    let mut s = format!(
        "Goal: {}. Learning style: {}. Cognitive capacity {:.2}, attention {:.2}, preferred complexity {:.2}.",
        profile.goal,
        channel_summary(profile.vark.components()),
        state.capacity,
        state.attention,
        state.complexity_pref
    );
    if !interests.is_empty() {
        let _ = write!(s, " Interests: {interests}.");
    }
    s
}

/// Ranking prompt over the first `budget` candidates in fallback order.
pub fn build_ranking_prompt(
    pool: &CandidatePool,
    profile: &UserProfile,
    state: &CognitiveState,
    graph: &KnowledgeGraph,
    config: &RecommenderConfig,
    k: usize,
) -> String {
    let mut p = String::new();
    let _ = writeln!(p, "Rank candidate items for this user.");
    let _ = writeln!(p, "User profile: {}", user_summary(profile, state, &pool.query_text));
    let _ = writeln!(p, "Candidates (id: description):");
    for (c, _) in fallback_order(pool, &config.weights)
        .into_iter()
        .take(config.prompt_budget)
    {
        let _ = writeln!(p, "- {}: {}", c.item_id, item_digest(graph, c.node));
    }
    let _ = writeln!(
        p,
        "Criteria: relevance to goal, VARK alignment, appropriate complexity, diversity, serendipity potential."
    );
    let _ = writeln!(
        p,
        "Return the best {k} as lines \"<rank>. <id> - <one sentence justification>\"."
    );
    p
}

static RANK_LINE: LazyLock<Regex> = LazyLock::new(|| {
    Regex::new(r"^\s*(?:\d+\s*[.):]|[-*])\s*(?:id\s*[:#]?\s*)?\**([A-Za-z0-9_:.\-]+?)\**(?:(?:\s+(?:-|–|—|\|)|\s*:)\s*(.*))?\s*$")
        .unwrap()
});

/// Extracts `(item_id, justification)` pairs in order. Unknown and repeated
/// ids are skipped with a warning.
pub fn parse_ranking_response(
    text: &str,
    known: &BTreeSet<&str>,
) -> (Vec<(String, Option<String>)>, Vec<ParseWarning>) {
    let mut out = Vec::new();
    let mut seen = BTreeSet::new();
    let mut warnings = Vec::new();
    for (n, line) in text.lines().enumerate() {
        let Some(cap) = RANK_LINE.captures(line) else {
            continue;
        };
        let id = cap[1].trim_end_matches(['.', ':']).to_string();
        if !known.contains(id.as_str()) {
            warnings.push(ParseWarning {
                line: n + 1,
                message: format!("item {id:?} is not in the candidate pool"),
            });
            continue;
        }
        if !seen.insert(id.clone()) {
            warnings.push(ParseWarning {
                line: n + 1,
                message: format!("item {id:?} listed twice"),
            });
            continue;
        }
        let just = cap
            .get(2)
            .map(|m| m.as_str().trim().to_string())
            .filter(|s| !s.is_empty());
        out.push((id, just));
    }
    (out, warnings)
}

/// Provider-ordered list, completed from the fallback order.
pub fn rank_with_provider(
    pool: &CandidatePool,
    profile: &UserProfile,
    state: &CognitiveState,
    graph: &KnowledgeGraph,
    provider: &dyn GenerationProvider,
    config: &RecommenderConfig,
    k: usize,
) -> Result<RankedList, RecommendError> {
    if pool.is_empty() {
        return Err(RecommendError::InvalidArgument("empty candidate pool".into()));
    }
    let prompt = build_ranking_prompt(pool, profile, state, graph, config, k);
    let response = provider.generate(&prompt, &DecodingParams::ENRICHMENT)?;
    let known: BTreeSet<&str> = pool.entries.iter().map(|c| c.item_id.as_str()).collect();
    let (picked, warnings) = parse_ranking_response(&response, &known);
    if picked.is_empty() {
        return Err(RecommendError::Parse("no candidate ids in response".into()));
    }
    let by_id: BTreeMap<&str, &Candidate> = pool.entries.iter().map(|c| (c.item_id.as_str(), c)).collect();
    let n = k.min(pool.len());
    let mut items: Vec<RankedItem> = Vec::with_capacity(n);
    let mut used = BTreeSet::new();
    for (id, just) in picked.into_iter().take(n) {
        let c = by_id[id.as_str()];
        used.insert(c.node);
        items.push(ranked(c, 0.0, just));
    }
    for (c, _) in fallback_order(pool, &config.weights) {
        if items.len() == n {
            break;
        }
        if used.insert(c.node) {
            items.push(ranked(c, 0.0, None));
        }
    }
    assign_positional_scores(&mut items);
    Ok(RankedList {
        items,
        method: RankMethod::Provider,
        degraded: false,
        warnings,
    })
}

fn assign_positional_scores(items: &mut [RankedItem]) {
    let n = items.len() as f64;
    for (i, it) in items.iter_mut().enumerate() {
        it.score = (n - i as f64) / n;
    }
}

/// Reorders the top `rerank_depth` fallback candidates by scorer relevance.
pub fn rank_with_scorer(
    pool: &CandidatePool,
    profile: &UserProfile,
    graph: &KnowledgeGraph,
    scorer: &dyn RelevanceScorer,
    config: &RecommenderConfig,
    k: usize,
) -> Result<RankedList, RecommendError> {
    let order = fallback_order(pool, &config.weights);
    let depth = config.rerank_depth.max(k).min(order.len());
    let head = &order[..depth];
    let passages: Vec<String> = head.iter().map(|(c, _)| item_digest(graph, c.node)).collect();
    let query = format!(
        "{} user who prefers {} content; interests: {}",
        profile.goal,
        profile.vark.argmax().label(),
        pool.query_text
    );
    let scores = scorer.score(&query, &passages)?;
    if scores.len() != passages.len() || scores.iter().any(|s| !s.is_finite()) {
        return Err(RecommendError::Parse(format!(
            "scorer returned {} scores for {} passages",
            scores.len(),
            passages.len()
        )));
    }
    let mut reranked: Vec<(usize, f64)> = scores.into_iter().enumerate().collect();
    // Stable on the fallback order for equal relevance.
    reranked.sort_by(|a, b| b.1.total_cmp(&a.1).then(a.0.cmp(&b.0)));
    let mut items: Vec<RankedItem> = reranked
        .into_iter()
        .take(k)
        .map(|(i, s)| ranked(head[i].0, s, None))
        .collect();
    assign_positional_scores(&mut items);
    Ok(RankedList {
        items,
        method: RankMethod::Scorer,
        degraded: false,
        warnings: Vec::new(),
    })
}

/// Least-squares fallback weights from (features, observed reward) pairs.
/// Returns `None` when the system is degenerate.
pub fn fit_fallback_weights(samples: &[([f64; 4], f64)]) -> Option<FallbackWeights> {
    if samples.len() < 4 {
        return None;
    }
    let x = DMatrix::from_fn(samples.len(), 4, |r, c| samples[r].0[c]);
    let y = DVector::from_iterator(samples.len(), samples.iter().map(|s| s.1));
    let svd = x.svd(true, true);
    if svd.rank(1e-10) < 4 {
        return None;
    }
    let w = svd.solve(&y, 1e-12).ok()?;
    Some(FallbackWeights::from_array([w[0], w[1], w[2], w[3]]))
}
