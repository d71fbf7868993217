//! Offline cold-start evaluation on MovieLens-format data.
//!
//! Users are split into training and cold users; each cold user ranks the
//! whole movie catalogue and is scored against the movies they rated at or
//! above the relevance threshold. Cold users bring only demographics: the
//! learning-style vector is drawn from a seeded Dirichlet prior and the
//! embedding starts random, as onboarding would leave it.

mod dataset;
mod metrics;
mod report;
mod split;
pub mod stats;
pub mod synth;

use std::collections::{BTreeMap, BTreeSet};
use std::path::PathBuf;
use std::str::FromStr;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Dirichlet, Distribution};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::cognition::SessionContext;
use crate::embed::{cosine, Embedder, HashingEmbedder, DEFAULT_DIM};
use crate::enrichment::{EnrichmentError, RawItem, SemanticProfile};
use crate::graph::{GraphError, KnowledgeGraph, NodeId};
use crate::profiling::{initial_embedding, Demographics, Goal, UserProfile};
use crate::provider::RelevanceScorer;
use crate::recommender::{recommend, Ranker, RecommendError, RecommenderConfig};
use crate::vark::VarkVector;

pub use dataset::{
    age_label, demographic_text, load_movielens, occupation_label, parse_movie_line, parse_rating_line,
    parse_user_line, write_movielens, Dataset, LoadStats, MlMovie, MlRating, MlUser, MAX_MALFORMED_FRACTION,
    MOVIES_FILE, RATINGS_FILE, USERS_FILE,
};
pub use metrics::{
    compute_metrics, compute_metrics_for, user_metrics, MetricReport, UserMetrics, DEFAULT_K, RECALL_KS,
};
pub use report::{
    emit_report, format_mean_std, mean_std, read_results_csv, render_table, write_results_csv, CsvRow, RESULTS_CSV,
    RESULTS_TABLE,
};
pub use split::{cold_split, ColdSplit, DEFAULT_COLD_RATIO, DEFAULT_RELEVANCE_THRESHOLD};
pub use stats::{significance, Significance, StatsError};

#[derive(Debug, thiserror::Error)]
pub enum EvalError {
    #[error("missing data file {0}")]
    MissingFile(PathBuf),
    #[error("{malformed} of {total} lines malformed (limit 0.1%)")]
    TooManyMalformedLines { malformed: usize, total: usize },
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
    #[error("ranking for user {user} has {got} items, need {expected}")]
    LengthMismatch { user: u32, expected: usize, got: usize },
    #[error("unknown baseline {0:?} (expected one of random, popularity, embedding_cosine, candidates_only, full_ce)")]
    UnknownBaseline(String),
    #[error(transparent)]
    Recommend(#[from] RecommendError),
    #[error(transparent)]
    Graph(#[from] GraphError),
    #[error(transparent)]
    Enrichment(#[from] EnrichmentError),
    #[error(transparent)]
    Stats(#[from] StatsError),
    #[error(transparent)]
    Csv(#[from] csv::Error),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Baseline {
    Random,
    Popularity,
    EmbeddingCosine,
    CandidatesOnly,
    FullCe,
}

impl Baseline {
    pub const ALL: [Baseline; 5] = [
        Baseline::Random,
        Baseline::Popularity,
        Baseline::EmbeddingCosine,
        Baseline::CandidatesOnly,
        Baseline::FullCe,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            Baseline::Random => "random",
            Baseline::Popularity => "popularity",
            Baseline::EmbeddingCosine => "embedding_cosine",
            Baseline::CandidatesOnly => "candidates_only",
            Baseline::FullCe => "full_ce",
        }
    }

    fn stream(self) -> u64 {
        self as u64 + 1
    }
}

impl std::fmt::Display for Baseline {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Baseline {
    type Err = EvalError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Baseline::ALL
            .into_iter()
            .find(|b| b.as_str() == s.trim())
            .ok_or_else(|| EvalError::UnknownBaseline(s.to_string()))
    }
}

/// Parses a comma-separated model list.
pub fn parse_models(list: &str) -> Result<Vec<Baseline>, EvalError> {
    let mut out = Vec::new();
    for m in list.split(',').filter(|s| !s.trim().is_empty()) {
        let b: Baseline = m.parse()?;
        if !out.contains(&b) {
            out.push(b);
        }
    }
    if out.is_empty() {
        return Err(EvalError::InvalidArgument("no models given".into()));
    }
    Ok(out)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct EvalConfig {
    pub k: usize,
    pub recall_ks: Vec<usize>,
    pub cold_ratio: f64,
    pub relevance_threshold: u8,
    pub seeds: u32,
    pub base_seed: u64,
    pub embedding_dim: usize,
    /// Mean of the Dirichlet prior for simulated cold-user VARK vectors.
    pub vark_mean: [f64; 4],
    pub vark_concentration: f64,
    /// Goal assumed for every cold user.
    pub goal: Goal,
    pub session: SessionContext,
    pub recommender: RecommenderConfig,
}

impl Default for EvalConfig {
    fn default() -> Self {
        Self {
            k: DEFAULT_K,
            recall_ks: RECALL_KS.to_vec(),
            cold_ratio: DEFAULT_COLD_RATIO,
            relevance_threshold: DEFAULT_RELEVANCE_THRESHOLD,
            seeds: 3,
            base_seed: 0,
            embedding_dim: DEFAULT_DIM,
            vark_mean: [0.35, 0.15, 0.25, 0.25],
            vark_concentration: 10.0,
            goal: Goal::Entertainment,
            session: SessionContext {
                stated_goal: Some(Goal::Entertainment),
                ..Default::default()
            },
            recommender: RecommenderConfig::default(),
        }
    }
}

impl EvalConfig {
    pub fn seed_list(&self) -> Vec<u64> {
        (0..self.seeds as u64).map(|i| self.base_seed + i).collect()
    }

    pub fn validate(&self) -> Result<(), EvalError> {
        let bad = |m: &str| Err(EvalError::InvalidArgument(m.to_string()));
        if self.k == 0 {
            return bad("k must be positive");
        }
        if self.seeds == 0 {
            return bad("at least one seed required");
        }
        if !(self.cold_ratio > 0.0 && self.cold_ratio < 1.0) {
            return bad("cold_ratio must lie in (0, 1)");
        }
        if self.vark_concentration <= 0.0 || self.vark_mean.iter().any(|m| *m <= 0.0) {
            return bad("VARK prior parameters must be positive");
        }
        Ok(())
    }
}

/// Stream-separated seed for per-user randomness.
fn mix(seed: u64, stream: u64, user: u32) -> u64 {
    let mut x = seed
        .wrapping_mul(0x9E37_79B9_7F4A_7C15)
        .wrapping_add(stream.wrapping_mul(0xD1B5_4A32_D192_ED03))
        .wrapping_add(user as u64);
    // splitmix64 finaliser
    x ^= x >> 30;
    x = x.wrapping_mul(0xBF58_476D_1CE4_E5B9);
    x ^= x >> 27;
    x = x.wrapping_mul(0x94D0_49BB_1331_11EB);
    x ^ (x >> 31)
}

/// Items in a graph keyed by their numeric catalogue id.
pub struct Catalog {
    pub graph: KnowledgeGraph,
    embedder: HashingEmbedder,
    nodes: BTreeMap<u32, NodeId>,
    ids: BTreeMap<NodeId, u32>,
}

impl Catalog {
    /// Builds the item graph from pre-computed profiles. Item ids must be
    /// numeric.
    pub fn from_profiles(items: &[(RawItem, SemanticProfile)], dim: usize) -> Result<Self, EvalError> {
        let embedder = HashingEmbedder::new(dim);
        let mut graph = KnowledgeGraph::new(dim);
        let mut nodes = BTreeMap::new();
        let mut ids = BTreeMap::new();
        for (raw, profile) in items {
            let id: u32 = raw
                .item_id
                .parse()
                .map_err(|_| EvalError::InvalidArgument(format!("non-numeric item id {:?}", raw.item_id)))?;
            let (node, _) = graph.upsert_item(raw, profile, &embedder)?;
            nodes.insert(id, node);
            ids.insert(node, id);
        }
        Ok(Self {
            graph,
            embedder,
            nodes,
            ids,
        })
    }

    /// Enriches every movie with `enrich` and builds the graph.
    pub fn build(
        ds: &Dataset,
        dim: usize,
        enrich: impl Fn(&RawItem) -> Result<SemanticProfile, EnrichmentError> + Sync,
    ) -> Result<Self, EvalError> {
        let items: Vec<(RawItem, SemanticProfile)> = ds
            .movies
            .par_iter()
            .map(|m| {
                let raw = m.to_raw_item();
                enrich(&raw).map(|p| (raw, p))
            })
            .collect::<Result<_, _>>()?;
        Self::from_profiles(&items, dim)
    }

    pub fn node(&self, id: u32) -> Option<NodeId> {
        self.nodes.get(&id).copied()
    }

    pub fn id(&self, node: NodeId) -> Option<u32> {
        self.ids.get(&node).copied()
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }
}

/// The simulated onboarding profile of a cold user.
pub fn cold_profile(user: &MlUser, seed: u64, cfg: &EvalConfig) -> UserProfile {
    let alpha = cfg.vark_mean.map(|m| m * cfg.vark_concentration);
    let mut rng = ChaCha8Rng::seed_from_u64(mix(seed, 0, user.id));
    let w: [f64; 4] = Dirichlet::new(alpha).expect("validated prior").sample(&mut rng);
    UserProfile {
        user_id: format!("cold-{}", user.id),
        demographics: Demographics {
            age: user.age,
            gender: user.gender,
            occupation: user.occupation,
        },
        goal: cfg.goal,
        vark: VarkVector::from_weights_or_uniform(w),
        embedding: initial_embedding(cfg.embedding_dim, mix(seed, 99, user.id)),
    }
}

/// Training-set rating counts, most rated first, ties by ascending id;
/// unrated catalogue items follow in id order.
pub fn popularity_order(ds: &Dataset, split: &ColdSplit) -> Vec<u32> {
    let mut counts: BTreeMap<u32, u64> = split.universe.iter().map(|m| (*m, 0)).collect();
    for r in split.train_ratings(ds) {
        if let Some(c) = counts.get_mut(&r.movie) {
            *c += 1;
        }
    }
    let mut order: Vec<(u32, u64)> = counts.into_iter().collect();
    order.sort_by(|a, b| b.1.cmp(&a.1).then(a.0.cmp(&b.0)));
    order.into_iter().map(|(m, _)| m).collect()
}

/// Appends the universe items missing from `head`, in ascending id order.
fn pad(head: Vec<u32>, universe: &[u32]) -> Vec<u32> {
    let seen: BTreeSet<u32> = head.iter().copied().collect();
    let mut out = head;
    out.extend(universe.iter().copied().filter(|m| !seen.contains(m)));
    out
}

pub struct Harness<'a> {
    pub dataset: &'a Dataset,
    pub catalog: &'a Catalog,
    pub config: &'a EvalConfig,
    pub scorer: Option<&'a dyn RelevanceScorer>,
}

impl<'a> Harness<'a> {
    pub fn new(dataset: &'a Dataset, catalog: &'a Catalog, config: &'a EvalConfig) -> Self {
        Self {
            dataset,
            catalog,
            config,
            scorer: None,
        }
    }

    pub fn with_scorer(mut self, scorer: &'a dyn RelevanceScorer) -> Self {
        self.scorer = Some(scorer);
        self
    }

    fn cold_users(&self, split: &ColdSplit) -> Vec<&'a MlUser> {
        split.cold_users.iter().filter_map(|u| self.dataset.user(*u)).collect()
    }

    /// Full-catalogue rankings for every cold user in the split.
    pub fn rankings(&self, model: Baseline, split: &ColdSplit) -> Result<BTreeMap<u32, Vec<u32>>, EvalError> {
        let users = self.cold_users(split);
        let universe = &split.universe;
        let out: Vec<(u32, Vec<u32>)> = match model {
            Baseline::Random => users
                .par_iter()
                .map(|u| {
                    let mut r = universe.clone();
                    r.shuffle(&mut ChaCha8Rng::seed_from_u64(mix(split.seed, model.stream(), u.id)));
                    (u.id, r)
                })
                .collect(),
            Baseline::Popularity => {
                let order = popularity_order(self.dataset, split);
                users.iter().map(|u| (u.id, order.clone())).collect()
            }
            Baseline::EmbeddingCosine => {
                let items: Vec<(u32, &[f32])> = universe
                    .iter()
                    .filter_map(|m| {
                        let node = self.catalog.node(*m)?;
                        Some((*m, self.catalog.graph.node(node)?.embedding.as_slice()))
                    })
                    .collect();
                let mut cache: BTreeMap<String, Vec<u32>> = BTreeMap::new();
                let mut out = Vec::with_capacity(users.len());
                for u in &users {
                    let text = demographic_text(u);
                    let ranking = cache
                        .entry(text)
                        .or_insert_with_key(|text| {
                            let q = self.catalog.embedder.embed(text);
                            let mut scored: Vec<(u32, f64)> =
                                items.par_iter().map(|(m, e)| (*m, cosine(&q, e))).collect();
                            scored.sort_by(|a, b| b.1.total_cmp(&a.1).then(a.0.cmp(&b.0)));
                            pad(scored.into_iter().map(|s| s.0).collect(), universe)
                        })
                        .clone();
                    out.push((u.id, ranking));
                }
                out
            }
            Baseline::CandidatesOnly | Baseline::FullCe => users
                .par_iter()
                .map(|u| self.pipeline_ranking(model, u, split).map(|r| (u.id, r)))
                .collect::<Result<_, _>>()?,
        };
        Ok(out.into_iter().collect())
    }

    fn pipeline_ranking(&self, model: Baseline, user: &MlUser, split: &ColdSplit) -> Result<Vec<u32>, EvalError> {
        let profile = cold_profile(user, split.seed, self.config);
        let ranker = match (model, self.scorer) {
            (Baseline::CandidatesOnly, _) => Ranker::CandidatesOnly,
            (_, Some(s)) => Ranker::Scorer(s),
            (_, None) => Ranker::Fallback,
        };
        let depth = self.config.recommender.max_pool.max(1);
        let rec = recommend(
            &self.catalog.graph,
            &profile,
            &self.config.session,
            ranker,
            &self.config.recommender,
            depth,
        )?;
        let head: Vec<u32> = rec.list.items.iter().filter_map(|i| self.catalog.id(i.node)).collect();
        Ok(pad(head, &split.universe))
    }

    /// Runs every model on every seed's split.
    pub fn run(&self, models: &[Baseline]) -> Result<EvalResults, EvalError> {
        self.config.validate()?;
        let mut runs: Vec<ModelRuns> = models
            .iter()
            .map(|m| ModelRuns {
                model: *m,
                reports: Vec::new(),
            })
            .collect();
        let mut splits = Vec::new();
        for seed in self.config.seed_list() {
            let split = cold_split(
                self.dataset,
                self.config.cold_ratio,
                self.config.relevance_threshold,
                seed,
            )?;
            tracing::info!(
                seed,
                cold = split.cold_users.len(),
                excluded = split.excluded_users.len(),
                "cold split"
            );
            for run in runs.iter_mut() {
                let rankings = self.rankings(run.model, &split)?;
                let report = compute_metrics(&rankings, &split, self.config.k, &self.config.recall_ks)?;
                tracing::info!(model = %run.model, seed, hr = report.hit_rate, ndcg = report.ndcg, "evaluated");
                run.reports.push(report);
            }
            splits.push(SplitSummary {
                seed,
                train_users: split.train_users.len(),
                cold_users: split.cold_users.len(),
                excluded_users: split.excluded_users.len(),
            });
        }
        let comparisons = pairwise_significance(&runs);
        Ok(EvalResults {
            k: self.config.k,
            recall_ks: self.config.recall_ks.clone(),
            splits,
            runs,
            comparisons,
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelRuns {
    pub model: Baseline,
    /// One report per seed, in seed order.
    pub reports: Vec<MetricReport>,
}

impl ModelRuns {
    /// Per-user HR@K pooled over seeds, aligned across models.
    pub fn pooled_hits(&self) -> Vec<f64> {
        self.reports.iter().flat_map(|r| r.hits()).collect()
    }

    pub fn pooled_ndcg(&self) -> Vec<f64> {
        self.reports.iter().flat_map(|r| r.ndcgs()).collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct SplitSummary {
    pub seed: u64,
    pub train_users: usize,
    pub cold_users: usize,
    pub excluded_users: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Comparison {
    pub a: Baseline,
    pub b: Baseline,
    pub metric: String,
    /// `None` when every paired difference is zero.
    pub result: Option<Significance>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalResults {
    pub k: usize,
    pub recall_ks: Vec<usize>,
    pub splits: Vec<SplitSummary>,
    pub runs: Vec<ModelRuns>,
    pub comparisons: Vec<Comparison>,
}

impl EvalResults {
    pub fn model(&self, m: Baseline) -> Option<&ModelRuns> {
        self.runs.iter().find(|r| r.model == m)
    }

    pub fn comparison(&self, a: Baseline, b: Baseline, metric: &str) -> Option<&Comparison> {
        self.comparisons
            .iter()
            .find(|c| c.a == a && c.b == b && c.metric == metric)
    }
}

/// Paired tests for every model pair on HR@K and nDCG@K, pairing each cold
/// user of each seed.
pub fn pairwise_significance(runs: &[ModelRuns]) -> Vec<Comparison> {
    let mut out = Vec::new();
    for i in 0..runs.len() {
        for j in i + 1..runs.len() {
            for (metric, a, b) in [
                ("hr", runs[i].pooled_hits(), runs[j].pooled_hits()),
                ("ndcg", runs[i].pooled_ndcg(), runs[j].pooled_ndcg()),
            ] {
                let result = match significance(&a, &b) {
                    Ok(s) => Some(s),
                    Err(StatsError::DegenerateSample) => None,
                    Err(e) => {
                        tracing::warn!(error = %e, "significance test skipped");
                        None
                    }
                };
                out.push(Comparison {
                    a: runs[i].model,
                    b: runs[j].model,
                    metric: metric.to_string(),
                    result,
                });
            }
        }
    }
    out
}
