use std::collections::{BTreeMap, BTreeSet};
use std::sync::atomic::{AtomicUsize, Ordering};

use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::*;
use crate::cognition::{Device, Pace};
use crate::embed::{cosine, HashingEmbedder};
use crate::enrichment::{deterministic_enrich, RawItem, SemanticProfile};
use crate::graph::EdgeType;
use crate::profiling::{create_user, Demographics};
use crate::provider::{DecodingParams, ProviderError, StaticProvider};
use crate::vark::VarkVector;

const DIM: usize = 32;
const GENRES: [&str; 10] = [
    "Action",
    "Animation",
    "Comedy",
    "Documentary",
    "Drama",
    "Horror",
    "Musical",
    "Romance",
    "Sci-Fi",
    "War",
];

fn catalog(n: usize, seed: u64) -> KnowledgeGraph {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let emb = HashingEmbedder::new(DIM);
    let mut g = KnowledgeGraph::new(DIM);
    for i in 0..n {
        let count = rng.random_range(1..=3);
        let mut genres: Vec<String> = (0..count)
            .map(|_| GENRES[rng.random_range(0..GENRES.len())].to_string())
            .collect();
        genres.sort();
        genres.dedup();
        let item = RawItem {
            item_id: format!("{}", i + 1),
            title: format!("Film {} {}", i + 1, genres.join(" ")),
            genres,
            year: 1990,
            description: None,
        };
        g.upsert_item(&item, &deterministic_enrich(&item), &emb).unwrap();
    }
    g
}

fn user(g: &mut KnowledgeGraph, id: &str, goal: Goal, vark: [f64; 4], seed: u64) -> UserProfile {
    create_user(
        g,
        id,
        Demographics::default(),
        goal,
        VarkVector::from_weights(vark).unwrap(),
        seed,
    )
    .unwrap()
    .0
}

fn open_state() -> CognitiveState {
    CognitiveState {
        capacity: 1.0,
        attention: 1.0,
        complexity_pref: 1.0,
        presentation: [1.0; 4],
    }
}

fn unfiltered() -> RecommenderConfig {
    RecommenderConfig {
        apply_cognitive_filter: false,
        ..Default::default()
    }
}

fn top_n(mut scores: Vec<(NodeId, f64)>, n: usize) -> BTreeSet<NodeId> {
    scores.sort_by(|a, b| b.1.partial_cmp(&a.1).unwrap().then(a.0.cmp(&b.0)));
    scores.into_iter().take(n).map(|s| s.0).collect()
}

/// Entity scores by walking every edge of the graph.
fn oracle_entity_scores(g: &KnowledgeGraph, names: &[String]) -> BTreeMap<NodeId, f64> {
    let wanted: BTreeSet<NodeId> = names.iter().filter_map(|n| g.entity_id(n)).collect();
    let mut out = BTreeMap::new();
    for e in g.edges() {
        if e.key.edge_type.is_item_entity()
            && wanted.contains(&e.key.target)
            && g.node(e.key.source).unwrap().node_type == NodeType::Item
        {
            *out.entry(e.key.source).or_insert(0.0) += e.weight;
        }
    }
    out
}

fn profile_of(g: &KnowledgeGraph, id: NodeId) -> &SemanticProfile {
    g.node(id).unwrap().profile.as_ref().unwrap()
}

#[test]
fn exact_embedding_match_scores_one() {
    let mut g = catalog(30, 1);
    let mut p = user(&mut g, "u", Goal::Entertainment, [0.25; 4], 5);
    let target = g.item_id("7").unwrap();
    p.embedding = g.node(target).unwrap().embedding.clone();
    let pool = generate_candidates(&g, &p, &open_state(), &unfiltered()).unwrap();
    let c = pool.get(target).expect("item in pool");
    assert!((c.semantic - 1.0).abs() < 1e-6);
    assert!(c.provenance.semantic);
}

#[test]
fn empty_band_relaxes_filter() {
    let mut g = KnowledgeGraph::new(DIM);
    let emb = HashingEmbedder::new(DIM);
    for i in 0..5 {
        let item = RawItem {
            item_id: i.to_string(),
            title: format!("Hard {i}"),
            genres: vec!["Documentary".into()],
            year: 2000,
            description: None,
        };
        let mut prof = deterministic_enrich(&item);
        prof.complexity = 5;
        g.upsert_item(&item, &prof, &emb).unwrap();
    }
    let p = user(&mut g, "u", Goal::Learning, [0.25; 4], 1);
    let low = CognitiveState {
        complexity_pref: 0.0,
        ..open_state()
    };
    assert_eq!(crate::cognition::complexity_band(&low), (1, 1));
    let pool = generate_candidates(&g, &p, &low, &RecommenderConfig::default()).unwrap();
    assert!(pool.relaxed_filter);
    assert_eq!(pool.band, (1, 5));
    assert_eq!(pool.len(), 5);
}

#[test]
fn empty_catalog_is_an_error() {
    let mut g = KnowledgeGraph::new(DIM);
    let p = user(&mut g, "u", Goal::Learning, [0.25; 4], 1);
    assert!(matches!(
        generate_candidates(&g, &p, &open_state(), &RecommenderConfig::default()),
        Err(RecommendError::EmptyCatalog)
    ));
}

#[test]
fn pool_matches_brute_force_on_fixture() {
    let mut g = catalog(50, 11);
    let p = user(&mut g, "u", Goal::Entertainment, [0.1, 0.4, 0.2, 0.3], 3);
    let config = RecommenderConfig {
        sizes: PoolSizes {
            semantic: 8,
            entity: 10,
            vark: 6,
        },
        ..Default::default()
    };
    for pref in [1.0, 0.5, 0.3] {
        let state = CognitiveState {
            complexity_pref: pref,
            ..open_state()
        };
        let pool = generate_candidates(&g, &p, &state, &config).unwrap();

        let items: Vec<NodeId> = g.item_ids().collect();
        let sem = top_n(
            items
                .iter()
                .map(|&i| (i, cosine(&g.node(i).unwrap().embedding, &p.embedding)))
                .collect(),
            8,
        );
        let names: Vec<String> = config.goal_entities[&Goal::Entertainment].clone();
        let ent = top_n(oracle_entity_scores(&g, &names).into_iter().collect(), 10);
        let vark = top_n(
            items
                .iter()
                .map(|&i| (i, profile_of(&g, i).vark_alignment.dot(&p.vark)))
                .collect(),
            6,
        );
        let (lo, hi) = crate::cognition::complexity_band(&state);
        let union: BTreeSet<NodeId> = sem
            .union(&ent)
            .cloned()
            .collect::<BTreeSet<_>>()
            .union(&vark)
            .cloned()
            .collect();
        let mut expected: BTreeSet<NodeId> = union
            .iter()
            .copied()
            .filter(|i| (lo..=hi).contains(&profile_of(&g, *i).complexity))
            .collect();
        if expected.is_empty() {
            assert!(pool.relaxed_filter);
            expected = union;
        }
        let got: BTreeSet<NodeId> = pool.entries.iter().map(|c| c.node).collect();
        assert_eq!(got, expected, "complexity_pref {pref}");
        assert_eq!(got.len(), pool.len(), "no duplicates");
    }
}

#[test]
fn pool_cap_and_minimum_size() {
    let mut g = catalog(120, 4);
    let p = user(&mut g, "u", Goal::Research, [0.25; 4], 9);
    let mut config = unfiltered();
    config.sizes = PoolSizes {
        semantic: 40,
        entity: 50,
        vark: 30,
    };
    let pool = generate_candidates(&g, &p, &open_state(), &config).unwrap();
    assert!(pool.len() >= 40);
    config.max_pool = 25;
    let capped = generate_candidates(&g, &p, &open_state(), &config).unwrap();
    assert_eq!(capped.len(), 25);
    // The cap keeps the highest combined scores of the uncapped pool.
    let kept: BTreeSet<NodeId> = capped.entries.iter().map(|c| c.node).collect();
    let best: BTreeSet<NodeId> = pool.entries.iter().take(25).map(|c| c.node).collect();
    assert_eq!(kept, best);
}

#[test]
fn vark_only_weights_order_by_alignment() {
    let mut g = catalog(40, 2);
    let p = user(&mut g, "u", Goal::Entertainment, [0.6, 0.1, 0.1, 0.2], 2);
    let pool = generate_candidates(&g, &p, &open_state(), &unfiltered()).unwrap();
    let w = FallbackWeights::from_array([0.0, 0.0, 1.0, 0.0]);
    let list = rank_fallback(&pool, &w, pool.len());
    let dots: Vec<f64> = list
        .nodes()
        .iter()
        .map(|n| profile_of(&g, *n).vark_alignment.dot(&p.vark))
        .collect();
    assert!(dots.windows(2).all(|w| w[0] >= w[1]));
    assert!(pool.entries.iter().all(|c| c.cf == 0.0), "cold user has no cf signal");
}

#[test]
fn fallback_matches_hand_computed_sums() {
    let mut g = catalog(20, 8);
    let p = user(&mut g, "u", Goal::Entertainment, [0.3, 0.2, 0.2, 0.3], 4);
    let pool = generate_candidates(&g, &p, &open_state(), &unfiltered()).unwrap();
    assert_eq!(pool.len(), 20);

    let names = RecommenderConfig::default().goal_entities[&Goal::Entertainment].clone();
    let ent = oracle_entity_scores(&g, &names);
    let ids: Vec<NodeId> = g.item_ids().collect();
    let sem: Vec<f64> = ids
        .iter()
        .map(|i| cosine(&g.node(*i).unwrap().embedding, &p.embedding))
        .collect();
    let ents: Vec<f64> = ids.iter().map(|i| ent.get(i).copied().unwrap_or(0.0)).collect();
    let scale = |v: &[f64]| {
        let lo = v.iter().cloned().fold(f64::MAX, f64::min);
        let hi = v.iter().cloned().fold(f64::MIN, f64::max);
        v.iter()
            .map(|x| if hi > lo { (x - lo) / (hi - lo) } else { 0.0 })
            .collect::<Vec<_>>()
    };
    let (sem_n, ent_n) = (scale(&sem), scale(&ents));
    let query = names.join(" ");
    let mut expected: Vec<(NodeId, f64)> = ids
        .iter()
        .enumerate()
        .map(|(x, &i)| {
            let text = g.text_similarity(&query, i);
            let graph = 0.5 * sem_n[x] + 0.5 * ent_n[x];
            let vark = profile_of(&g, i).vark_alignment.dot(&p.vark);
            (i, 0.3 * text + 0.3 * graph + 0.3 * vark)
        })
        .collect();
    expected.sort_by(|a, b| b.1.partial_cmp(&a.1).unwrap().then(a.0.cmp(&b.0)));

    let list = rank_fallback(&pool, &FallbackWeights::default(), 20);
    for (got, want) in list.items.iter().zip(&expected) {
        assert_eq!(got.node, want.0);
        assert!((got.score - want.1).abs() < 1e-9);
    }
}

#[test]
fn collaborative_signal_for_warm_users() {
    let mut g = catalog(10, 3);
    let a = g.item_id("1").unwrap();
    let b = g.item_id("2").unwrap();
    let p = user(&mut g, "me", Goal::Entertainment, [0.25; 4], 1);
    let me = g.id_of("user:me").unwrap();
    for other in ["x", "y"] {
        user(&mut g, other, Goal::Entertainment, [0.25; 4], 2);
        let o = g.id_of(&format!("user:{other}")).unwrap();
        g.apply_interaction(o, a, 1.0).unwrap();
        g.apply_interaction(o, b, 1.0).unwrap();
    }
    g.apply_interaction(me, a, 1.0).unwrap();
    let pool = generate_candidates(&g, &p, &open_state(), &unfiltered()).unwrap();
    assert!(pool.get(a).is_none(), "interacted items are excluded");
    assert!((pool.get(b).unwrap().cf - 1.0).abs() < 1e-12);
    assert!(pool.entries.iter().filter(|c| c.node != b).all(|c| c.cf == 0.0));
}

struct Echo;

impl GenerationProvider for Echo {
    fn identity(&self) -> &str {
        "echo"
    }

    /// Answers with the candidate ids in prompt order.
    fn generate(&self, prompt: &str, _: &DecodingParams) -> Result<String, ProviderError> {
        let mut out = String::new();
        for (n, line) in prompt.lines().filter(|l| l.starts_with("- ")).enumerate() {
            let id = line[2..].split(':').next().unwrap();
            out.push_str(&format!("{}. {} - fits the stated goal\n", n + 1, id));
        }
        Ok(out)
    }
}

struct Failing(AtomicUsize);

impl GenerationProvider for Failing {
    fn identity(&self) -> &str {
        "failing"
    }

    fn generate(&self, _: &str, _: &DecodingParams) -> Result<String, ProviderError> {
        self.0.fetch_add(1, Ordering::SeqCst);
        Err(ProviderError::Timeout)
    }
}

fn fixture_pool() -> (KnowledgeGraph, UserProfile, CandidatePool) {
    let mut g = catalog(40, 21);
    let p = user(&mut g, "u", Goal::Entertainment, [0.4, 0.1, 0.2, 0.3], 6);
    let pool = generate_candidates(&g, &p, &open_state(), &unfiltered()).unwrap();
    (g, p, pool)
}

#[test]
fn provider_echo_keeps_fallback_order_with_justifications() {
    let (g, p, pool) = fixture_pool();
    let cfg = unfiltered();
    let list = rank_with_provider(&pool, &p, &open_state(), &g, &Echo, &cfg, 10).unwrap();
    let fallback = rank_fallback(&pool, &cfg.weights, 10);
    assert_eq!(list.nodes(), fallback.nodes());
    assert!(list
        .items
        .iter()
        .all(|i| i.justification.as_deref() == Some("fits the stated goal")));
    assert!(list.items.windows(2).all(|w| w[0].score > w[1].score));
    assert!(list.warnings.is_empty());
}

#[test]
fn partial_provider_answer_is_completed() {
    let (g, p, pool) = fixture_pool();
    let cfg = unfiltered();
    let fallback = rank_fallback(&pool, &cfg.weights, pool.len());
    // Three ids from deep in the fallback order.
    let picks: Vec<String> = fallback.items[20..23].iter().map(|i| i.item_id.clone()).collect();
    let response = format!(
        "1. {} - a\n2. 99999 - not a candidate\n3. {}\n4. {} - c\n",
        picks[0], picks[1], picks[2]
    );
    let provider = StaticProvider::new("fixed", response);
    let list = rank_with_provider(&pool, &p, &open_state(), &g, &provider, &cfg, 10).unwrap();
    assert_eq!(list.len(), 10);
    assert_eq!(
        &list.item_ids()[..3],
        &[picks[0].as_str(), picks[1].as_str(), picks[2].as_str()]
    );
    let rest: Vec<NodeId> = fallback
        .items
        .iter()
        .filter(|i| !picks.contains(&i.item_id))
        .take(7)
        .map(|i| i.node)
        .collect();
    assert_eq!(&list.nodes()[3..], &rest[..]);
    assert_eq!(list.warnings.len(), 1);
    assert!(list.warnings[0].message.contains("99999"));
}

#[test]
fn provider_garbage_is_a_parse_error() {
    let (g, p, pool) = fixture_pool();
    let provider = StaticProvider::new("junk", "I cannot rank these.");
    assert!(matches!(
        rank_with_provider(&pool, &p, &open_state(), &g, &provider, &unfiltered(), 10),
        Err(RecommendError::Parse(_))
    ));
}

#[test]
fn ranking_prompt_respects_budget() {
    let (g, p, pool) = fixture_pool();
    let cfg = RecommenderConfig {
        prompt_budget: 5,
        ..unfiltered()
    };
    let prompt = build_ranking_prompt(&pool, &p, &open_state(), &g, &cfg, 10);
    assert_eq!(prompt.lines().filter(|l| l.starts_with("- ")).count(), 5);
    for needle in [
        "relevance to goal",
        "VARK alignment",
        "complexity",
        "diversity",
        "serendipity",
    ] {
        assert!(prompt.contains(needle));
    }
}

#[test]
fn recommend_without_provider_equals_fallback() {
    let (g, p, _) = fixture_pool();
    let ctx = SessionContext::default();
    let cfg = RecommenderConfig::default();
    let rec = recommend(&g, &p, &ctx, Ranker::Fallback, &cfg, 10).unwrap();
    let state = cfg.cognition.estimate_state(&ctx, &p.vark);
    let pool = generate_candidates(&g, &p, &state, &cfg).unwrap();
    assert_eq!(rec.list, rank_fallback(&pool, &cfg.weights, 10));
    assert_eq!(rec.list.len(), 10);

    let failing = Failing(AtomicUsize::new(0));
    let degraded = recommend(&g, &p, &ctx, Ranker::Provider(&failing), &cfg, 10).unwrap();
    assert_eq!(degraded.list.items, rec.list.items);
    assert!(degraded.list.degraded);
    assert_eq!(failing.0.load(Ordering::SeqCst), 1);

    assert!(recommend(&g, &p, &ctx, Ranker::Fallback, &cfg, 0).is_err());
}

#[test]
fn recommend_is_deterministic() {
    let (g, p, _) = fixture_pool();
    let ctx = SessionContext {
        device: Device::Mobile,
        pace: Pace::Fast,
        ..Default::default()
    };
    let cfg = RecommenderConfig::default();
    let a = recommend(&g, &p, &ctx, Ranker::Provider(&Echo), &cfg, 10).unwrap();
    let b = recommend(&g, &p, &ctx, Ranker::Provider(&Echo), &cfg, 10).unwrap();
    assert_eq!(a, b);
}

struct Lexical;

impl RelevanceScorer for Lexical {
    fn identity(&self) -> &str {
        "lexical"
    }

    /// Prefers passages mentioning war.
    fn score(&self, _: &str, passages: &[String]) -> Result<Vec<f64>, ProviderError> {
        Ok(passages
            .iter()
            .map(|p| if p.contains("War") { 1.0 } else { 0.0 })
            .collect())
    }
}

#[test]
fn scorer_reranks_head_of_pool() {
    let (g, p, pool) = fixture_pool();
    let cfg = unfiltered();
    let list = rank_with_scorer(&pool, &p, &g, &Lexical, &cfg, 10).unwrap();
    let has_war = |n: NodeId| profile_of(&g, n).entities.iter().any(|e| e.name == "War");
    let wars = list.nodes().iter().take_while(|n| has_war(**n)).count();
    let total_wars = pool.entries.iter().filter(|c| has_war(c.node)).count().min(10);
    assert_eq!(wars, total_wars);
    assert_eq!(list.method, RankMethod::Scorer);
}

#[test]
fn different_styles_diverge_at_top() {
    // Two catalogs of items that differ only in style alignment.
    let mut g = KnowledgeGraph::new(DIM);
    let emb = HashingEmbedder::new(DIM);
    for (id, genre) in [("vis", "Animation"), ("read", "Documentary")] {
        let item = RawItem {
            item_id: id.into(),
            title: format!("{id} feature"),
            genres: vec![genre.into()],
            year: 1999,
            description: None,
        };
        let mut prof = deterministic_enrich(&item);
        prof.complexity = 3;
        g.upsert_item(&item, &prof, &emb).unwrap();
    }
    let mut visual = user(&mut g, "a", Goal::Purchase, [0.7, 0.1, 0.1, 0.1], 1);
    let mut reader = user(&mut g, "b", Goal::Purchase, [0.1, 0.1, 0.7, 0.1], 1);
    // Zero embeddings give both items the same semantic score, isolating the style term.
    visual.embedding = vec![0.0; DIM];
    reader.embedding = vec![0.0; DIM];
    let cfg = RecommenderConfig::default();
    let ctx = SessionContext::default();
    let top = |p: &UserProfile| {
        recommend(&g, p, &ctx, Ranker::Fallback, &cfg, 1).unwrap().list.items[0]
            .item_id
            .clone()
    };
    let tops: BTreeSet<String> = [top(&visual), top(&reader)].into_iter().collect();
    assert_eq!(tops.len(), 2);
}

#[test]
fn least_squares_recovers_weights() {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let truth = [0.2, 0.5, 0.25, 0.05];
    let samples: Vec<([f64; 4], f64)> = (0..200)
        .map(|_| {
            let f = [rng.random(), rng.random(), rng.random(), rng.random()];
            let y = (0..4).map(|i| f[i] * truth[i]).sum();
            (f, y)
        })
        .collect();
    let w = fit_fallback_weights(&samples).unwrap().as_array();
    for i in 0..4 {
        assert!((w[i] - truth[i]).abs() < 1e-9);
    }
    assert!(fit_fallback_weights(&samples[..3]).is_none());
    let flat: Vec<([f64; 4], f64)> = (0..10).map(|_| ([1.0, 1.0, 1.0, 1.0], 1.0)).collect();
    assert!(fit_fallback_weights(&flat).is_none());
}

#[test]
fn ranking_response_parser() {
    let known: BTreeSet<&str> = ["12", "7", "a-1"].into_iter().collect();
    let (ids, warnings) = parse_ranking_response(
        "Here you go:\n1. 12 - great\n2) **7**: fine\n3. 12 - dup\n- a-1\n4. The Matrix - nope\n5. 3",
        &known,
    );
    assert_eq!(
        ids,
        vec![
            ("12".to_string(), Some("great".to_string())),
            ("7".to_string(), Some("fine".to_string())),
            ("a-1".to_string(), None),
        ]
    );
    assert_eq!(warnings.len(), 2);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn fallback_is_a_permutation_and_monotone_in_vark(
        seed in 0u64..1000,
        target in 0usize..30,
        bump in 0.0f64..1.0,
        k in 1usize..40,
    ) {
        let mut g = catalog(30, seed);
        let p = user(&mut g, "u", Goal::Entertainment, [0.25, 0.25, 0.3, 0.2], seed);
        let pool = generate_candidates(&g, &p, &open_state(), &unfiltered()).unwrap();
        let w = FallbackWeights::default();
        let list = rank_fallback(&pool, &w, k);
        prop_assert_eq!(list.len(), k.min(pool.len()));
        let uniq: BTreeSet<NodeId> = list.nodes().into_iter().collect();
        prop_assert_eq!(uniq.len(), list.len());
        prop_assert!(list.nodes().iter().all(|n| pool.get(*n).is_some()));

        let target = target % pool.len();
        let node = pool.entries[target].node;
        let rank_of = |pool: &CandidatePool| {
            rank_fallback(pool, &w, pool.len()).nodes().iter().position(|n| *n == node).unwrap()
        };
        let before = rank_of(&pool);
        let mut bumped = pool.clone();
        bumped.entries[target].vark += bump;
        prop_assert!(rank_of(&bumped) <= before);
    }
}

#[test]
fn edge_types_used_for_entities() {
    // Retrieval entities include those the user has come to prefer.
    let mut g = catalog(10, 3);
    let p = user(&mut g, "me", Goal::Learning, [0.25; 4], 1);
    let me = g.id_of("user:me").unwrap();
    let item = g.item_id("4").unwrap();
    g.apply_interaction(me, item, 1.0).unwrap();
    let ents = retrieval_entities(&g, &p, &RecommenderConfig::default());
    let preferred: Vec<String> = g
        .out_edges(me)
        .filter(|e| e.key.edge_type == EdgeType::Prefers)
        .filter(|e| g.node(e.key.target).unwrap().node_type == NodeType::Entity)
        .map(|e| crate::enrichment::normalize_entity_name(&g.node(e.key.target).unwrap().name))
        .collect();
    assert!(!preferred.is_empty());
    for name in preferred {
        assert!(ents.contains(&name));
    }
    assert_eq!(&ents[..3], &["documentary", "drama", "war"]);
}
