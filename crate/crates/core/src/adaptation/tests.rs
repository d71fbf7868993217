use std::collections::BTreeSet;

use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::*;
use crate::cognition::CognitiveState;
use crate::embed::HashingEmbedder;
use crate::enrichment::{deterministic_enrich, Entity, RawItem, SemanticProfile};
use crate::graph::{user_key, EdgeType, KnowledgeGraph, NodeId};
use crate::profiling::{create_user, Demographics, Goal, UserProfile};
use crate::provider::{DecodingParams, GenerationProvider, ProviderError, StaticProvider};
use crate::recommender::{RankMethod, RankedItem, RankedList};
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
        let count = rng.random_range(1..=2);
        let mut genres: Vec<String> = (0..count)
            .map(|_| GENRES[rng.random_range(0..GENRES.len())].to_string())
            .collect();
        genres.sort();
        genres.dedup();
        let item = RawItem {
            item_id: format!("{}", i + 1),
            title: format!("Film {}", i + 1),
            genres,
            year: 0,
            description: None,
        };
        g.upsert_item(&item, &deterministic_enrich(&item), &emb).unwrap();
    }
    g
}

fn setup(n: usize, users: usize) -> (KnowledgeGraph, ProfileStore) {
    let mut g = catalog(n, 3);
    let mut store = ProfileStore::default();
    for u in 0..users {
        let (p, _, _) = create_user(
            &mut g,
            &format!("u{u}"),
            Demographics::default(),
            Goal::Entertainment,
            VarkVector::from_weights([0.4, 0.2, 0.2, 0.2]).unwrap(),
            u as u64,
        )
        .unwrap();
        store.insert(p).unwrap();
    }
    (g, store)
}

fn list_of(g: &KnowledgeGraph, ids: &[&str]) -> RankedList {
    let n = ids.len();
    RankedList {
        items: ids
            .iter()
            .enumerate()
            .map(|(i, id)| RankedItem {
                node: g.item_id(id).unwrap(),
                item_id: id.to_string(),
                score: (n - i) as f64 / n as f64,
                justification: None,
            })
            .collect(),
        method: RankMethod::Fallback,
        degraded: false,
        warnings: Vec::new(),
    }
}

fn state(capacity: f64, attention: f64, presentation: [f64; 4]) -> CognitiveState {
    CognitiveState {
        capacity,
        attention,
        complexity_pref: capacity,
        presentation,
    }
}

fn ev(kind: EventKind, value: Option<f64>) -> InteractionEvent {
    InteractionEvent::new("u0", "1", kind, value)
}

#[test]
fn signal_table() {
    assert_eq!(signal(EventKind::Rating, Some(5.0)), 1.0);
    assert_eq!(signal(EventKind::Rating, Some(1.0)), -1.0);
    assert_eq!(signal(EventKind::Rating, Some(3.0)), 0.0);
    assert_eq!(signal(EventKind::Rating, Some(4.0)), 0.5);
    assert_eq!(signal(EventKind::Click, None), 0.3);
    assert_eq!(signal(EventKind::Wishlist, None), 0.6);
    assert_eq!(signal(EventKind::Complete, None), 0.8);
    assert_eq!(signal(EventKind::Skip, None), -0.4);
    assert_eq!(signal(EventKind::Impression, None), 0.0);
    assert_eq!(signal(EventKind::ViewTime, Some(300.0)), 0.25);
    assert_eq!(signal(EventKind::ViewTime, Some(6000.0)), 0.5);
}

#[test]
fn invalid_events_rejected() {
    assert!(ev(EventKind::Rating, Some(6.0)).validate().is_err());
    assert!(ev(EventKind::Rating, None).validate().is_err());
    assert!(ev(EventKind::ViewTime, Some(-1.0)).validate().is_err());
    assert!(ev(EventKind::Click, None).validate().is_ok());
}

#[test]
fn rating_five_is_full_signal_and_moves_embedding() {
    let (mut g, mut store) = setup(20, 1);
    let mut l = FeedbackLearner::default();
    let before = store.profile("u0").unwrap().embedding.clone();
    let out = l
        .process_event(&mut g, &mut store, &ev(EventKind::Rating, Some(5.0)))
        .unwrap();
    assert_eq!(out.signal, 1.0);
    assert!(out.embedding_updated);
    assert_ne!(store.profile("u0").unwrap().embedding, before);
    let uid = g.id_of(&user_key("u0")).unwrap();
    assert_eq!(g.node(uid).unwrap().embedding, store.profile("u0").unwrap().embedding);
    assert_eq!(g.weight(uid, g.item_id("1").unwrap(), EdgeType::Interacted), Some(1.0));
}

#[test]
fn rating_three_keeps_embedding() {
    let (mut g, mut store) = setup(20, 1);
    let mut l = FeedbackLearner::default();
    let before = store.profile("u0").unwrap().embedding.clone();
    let out = l
        .process_event(&mut g, &mut store, &ev(EventKind::Rating, Some(3.0)))
        .unwrap();
    assert_eq!(out.signal, 0.0);
    assert!(!out.embedding_updated);
    assert_eq!(store.profile("u0").unwrap().embedding, before);
}

#[test]
fn click_then_skip_nets_minus_one_hundredth() {
    let (mut g, mut store) = setup(20, 1);
    let mut l = FeedbackLearner::default();
    // Neutral rating creates the edge at 0.5.
    l.process_event(&mut g, &mut store, &ev(EventKind::Rating, Some(3.0)))
        .unwrap();
    let uid = g.id_of(&user_key("u0")).unwrap();
    let iid = g.item_id("1").unwrap();
    let w0 = g.weight(uid, iid, EdgeType::Interacted).unwrap();
    l.process_event(&mut g, &mut store, &ev(EventKind::Click, None))
        .unwrap();
    l.process_event(&mut g, &mut store, &ev(EventKind::Skip, None)).unwrap();
    let w1 = g.weight(uid, iid, EdgeType::Interacted).unwrap();
    assert!((w1 - w0 - (-0.01)).abs() < 1e-12, "{w0} -> {w1}");
}

#[test]
fn impressions_do_not_touch_the_graph() {
    let (mut g, mut store) = setup(20, 1);
    let mut l = FeedbackLearner::default();
    let edges = g.edge_count();
    let out = l
        .process_event(&mut g, &mut store, &ev(EventKind::Impression, None))
        .unwrap();
    assert!(out.delta.is_empty());
    assert_eq!(g.edge_count(), edges);
    assert_eq!(l.stats("u0").unwrap().events_by_kind[&EventKind::Impression], 1);
}

#[test]
fn unknown_user_and_item() {
    let (mut g, mut store) = setup(5, 1);
    let mut l = FeedbackLearner::default();
    let e = InteractionEvent::new("ghost", "1", EventKind::Click, None);
    assert!(matches!(
        l.process_event(&mut g, &mut store, &e),
        Err(AdaptError::UnknownUser(_))
    ));
    let e = InteractionEvent::new("u0", "999", EventKind::Click, None);
    assert!(matches!(
        l.process_event(&mut g, &mut store, &e),
        Err(AdaptError::UnknownItem(_))
    ));
}

#[test]
fn repeated_engagement_refines_vark_toward_channel() {
    let mut g = KnowledgeGraph::new(DIM);
    let emb = HashingEmbedder::new(DIM);
    let item = RawItem {
        item_id: "k".into(),
        title: "Hands on".into(),
        genres: vec!["Documentary".into()],
        year: 0,
        description: None,
    };
    let mut prof = deterministic_enrich(&item);
    prof.vark_alignment = VarkVector::from_weights([0.1, 0.1, 0.1, 0.7]).unwrap();
    g.upsert_item(&item, &prof, &emb).unwrap();
    let mut store = ProfileStore::default();
    let start = VarkVector::from_weights([0.4, 0.2, 0.2, 0.2]).unwrap();
    let (p, uid, _) = create_user(&mut g, "u", Demographics::default(), Goal::Learning, start, 1).unwrap();
    store.insert(p).unwrap();
    let mut l = FeedbackLearner::default();
    let mut refined = 0;
    for _ in 0..20 {
        let out = l
            .process_event(
                &mut g,
                &mut store,
                &InteractionEvent::new("u", "k", EventKind::Complete, None),
            )
            .unwrap();
        refined += out.refined_vark.is_some() as usize;
    }
    assert_eq!(refined, 2);
    let s = store.get("u").unwrap();
    assert_eq!(s.vark_history.len(), 2);
    let k = s.profile.vark.get(crate::vark::Channel::Kinesthetic);
    // Two blends toward (0,0,0,1) at ρ = 0.05.
    let expect = 1.0 - 0.8 * 0.95 * 0.95;
    assert!((k - expect).abs() < 1e-12);
    let vnode = g
        .id_of(&crate::profiling::vark_key(crate::vark::Channel::Kinesthetic))
        .unwrap();
    assert!((g.weight(uid, vnode, EdgeType::Prefers).unwrap() - expect).abs() < 1e-12);
}

#[test]
fn presentation_examples() {
    let g = catalog(12, 1);
    let ids: Vec<String> = (1..=10).map(|i| i.to_string()).collect();
    let refs: Vec<&str> = ids.iter().map(|s| s.as_str()).collect();
    let list = list_of(&g, &refs);

    let p = compose_presentation(&list, &state(0.18, 0.3, [0.1, 0.2, 0.3, 0.4]));
    assert_eq!(p.detail, DetailLevel::Minimal);
    assert_eq!(p.initial_visible, 3);
    assert_eq!(p.emphasis, EmphasisMode::Interactive);

    let p = compose_presentation(&list, &state(1.0, 1.0, [0.9, 0.1, 0.1, 0.1]));
    assert_eq!(p.detail, DetailLevel::Full);
    assert_eq!(p.initial_visible, 10);
    assert!(p.items.iter().all(|d| d.visible));
    assert_eq!(p.emphasis, EmphasisMode::Visual);

    let p = compose_presentation(&list, &state(0.5, 0.55, [0.4, 0.1, 0.1, 0.4]));
    assert_eq!(p.emphasis, EmphasisMode::Text);
    assert_eq!(p.detail, DetailLevel::Compact);
    assert_eq!(p.initial_visible, 6);
}

#[test]
fn visible_count_bounds() {
    assert_eq!(initial_visible(0.3, 2), 2);
    assert_eq!(initial_visible(0.7, 10), 7);
    assert_eq!(initial_visible(0.0, 10), 3);
    assert_eq!(initial_visible(0.01, 100), 3);
    assert_eq!(initial_visible(0.5, 100), 50);
}

#[test]
fn serendipity_rate_zero_is_identity() {
    let (g, _) = setup(40, 1);
    let refs: Vec<String> = (1..=10).map(|i| i.to_string()).collect();
    let list = list_of(&g, &refs.iter().map(|s| s.as_str()).collect::<Vec<_>>());
    let r = inject_serendipity(&list, &g, None, &["comedy".into()], (1, 5), 0.0, 1);
    assert_eq!(r.list, list);
    assert!(r.injections.is_empty());
}

fn familiar_items(g: &KnowledgeGraph, user: Option<NodeId>, interests: &[String]) -> BTreeSet<NodeId> {
    // Independent walk: every item with an entity edge to a top-decile entity.
    let aff = entity_affinity(g, user, interests);
    let top = top_decile_entities(&aff);
    g.edges()
        .filter(|e| e.key.edge_type.is_item_entity() && top.contains(&e.key.target))
        .map(|e| e.key.source)
        .collect()
}

#[test]
fn serendipity_replaces_tail_outside_neighbourhood() {
    let (g, _) = setup(80, 1);
    let interests = vec!["comedy".to_string(), "drama".to_string()];
    let refs: Vec<String> = (1..=10).map(|i| i.to_string()).collect();
    let list = list_of(&g, &refs.iter().map(|s| s.as_str()).collect::<Vec<_>>());
    let r = inject_serendipity(&list, &g, None, &interests, (1, 5), 0.2, 7);
    assert_eq!(r.injections.len(), 2);
    assert_eq!(r.injections.iter().map(|i| i.rank).collect::<Vec<_>>(), vec![8, 9]);
    assert_eq!(r.list.items[..8], list.items[..8]);
    let familiar = familiar_items(&g, None, &interests);
    assert!(!familiar.is_empty());
    let listed: BTreeSet<NodeId> = list.items.iter().map(|i| i.node).collect();
    for inj in &r.injections {
        assert!(!familiar.contains(&inj.injected));
        assert!(!listed.contains(&inj.injected));
    }
    // Same seed, same picks.
    assert_eq!(inject_serendipity(&list, &g, None, &interests, (1, 5), 0.2, 7), r);
}

#[test]
fn serendipity_respects_band_and_shortage() {
    let (g, _) = setup(60, 1);
    let refs: Vec<String> = (1..=10).map(|i| i.to_string()).collect();
    let list = list_of(&g, &refs.iter().map(|s| s.as_str()).collect::<Vec<_>>());
    let r = inject_serendipity(&list, &g, None, &[], (5, 5), 0.5, 3);
    for inj in &r.injections {
        assert_eq!(g.profile(inj.injected).unwrap().complexity, 5);
    }
    // An impossible band yields no replacements rather than an error.
    let r = inject_serendipity(&list, &g, None, &[], (6, 6), 0.5, 3);
    assert!(r.injections.is_empty());
    assert_eq!(r.list, list);
}

#[test]
fn top_decile_includes_ties() {
    let mut aff = std::collections::BTreeMap::new();
    for i in 0..20 {
        aff.insert(NodeId(i), i as f64);
    }
    assert_eq!(
        top_decile_entities(&aff),
        [NodeId(18), NodeId(19)].into_iter().collect()
    );
    let flat: std::collections::BTreeMap<_, _> = (0..4).map(|i| (NodeId(i), 1.0)).collect();
    assert_eq!(top_decile_entities(&flat).len(), 4);
}

fn user_with(vark: [f64; 4], goal: Goal) -> UserProfile {
    UserProfile {
        user_id: "u".into(),
        demographics: Demographics::default(),
        goal,
        vark: VarkVector::from_weights(vark).unwrap(),
        embedding: vec![0.0; 4],
    }
}

fn matrix_like() -> SemanticProfile {
    deterministic_enrich(&RawItem {
        item_id: "2571".into(),
        title: "Matrix, The (1999)".into(),
        genres: vec!["Action".into(), "Sci-Fi".into(), "Thriller".into()],
        year: 1999,
        description: None,
    })
}

#[test]
fn visual_user_explanation_mentions_channel_and_entity() {
    let user = user_with([0.6, 0.1, 0.2, 0.1], Goal::Entertainment);
    let e = generate_explanation("Matrix, The (1999)", &matrix_like(), &user, &["sci-fi".into()], None);
    assert!(e.text.starts_with("Matches your visual preference"), "{}", e.text);
    assert!(e.text.contains("Sci-Fi"));
    assert_eq!(e.source, ExplanationSource::Template);
    assert!(!e.degraded);
    assert_eq!(sentence_count(&e.text), 3);
}

#[test]
fn uniform_vark_names_goal() {
    let user = user_with([0.25; 4], Goal::Research);
    let e = generate_explanation("X", &matrix_like(), &user, &[], None);
    assert!(e.text.contains("research goal"), "{}", e.text);
    assert!(!e.text.contains("preference"));
}

struct Timeout;

impl GenerationProvider for Timeout {
    fn identity(&self) -> &str {
        "timeout"
    }
    fn generate(&self, _: &str, _: &DecodingParams) -> Result<String, ProviderError> {
        Err(ProviderError::Timeout)
    }
}

#[test]
fn provider_failure_degrades_to_template() {
    let user = user_with([0.6, 0.1, 0.2, 0.1], Goal::Entertainment);
    let e = generate_explanation("Matrix", &matrix_like(), &user, &[], Some(&Timeout));
    assert!(e.degraded);
    assert_eq!(e.source, ExplanationSource::Template);
    assert_eq!(e.text, template_explanation("Matrix", &matrix_like(), &user, &[]));
}

#[test]
fn provider_text_is_trimmed_to_three_sentences() {
    let user = user_with([0.6, 0.1, 0.2, 0.1], Goal::Entertainment);
    let p = StaticProvider::new("s", "One. Two! Three? Four.");
    let e = generate_explanation("Matrix", &matrix_like(), &user, &[], Some(&p));
    assert_eq!(e.text, "One. Two! Three?");
    assert_eq!(e.source, ExplanationSource::Provider);
    let short = StaticProvider::new("s", "Only one sentence.");
    assert!(generate_explanation("Matrix", &matrix_like(), &user, &[], Some(&short)).degraded);
}

#[test]
fn event_log_round_trip_and_torn_tail() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("events.log");
    let events: Vec<InteractionEvent> = (0..5)
        .map(|i| InteractionEvent::new("u0", &i.to_string(), EventKind::Rating, Some(1.0 + i as f64)))
        .collect();
    {
        let (mut log, old) = EventLog::<InteractionEvent>::open(&path).unwrap();
        assert!(old.is_empty());
        for e in &events {
            log.append(e).unwrap();
        }
        assert_eq!(log.len(), 5);
    }
    assert_eq!(EventLog::<InteractionEvent>::read_all(&path).unwrap(), events);
    // Simulate a crash halfway through a record.
    {
        use std::io::Write;
        let mut f = std::fs::OpenOptions::new().append(true).open(&path).unwrap();
        f.write_all(&[200, 0, 0, 0, b'{']).unwrap();
    }
    let (mut log, old) = EventLog::<InteractionEvent>::open(&path).unwrap();
    assert_eq!(old, events);
    log.append(&events[0]).unwrap();
    drop(log);
    assert_eq!(EventLog::<InteractionEvent>::read_all(&path).unwrap().len(), 6);
}

#[test]
fn event_log_rejects_foreign_file() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("x.log");
    std::fs::write(&path, b"not a log at all").unwrap();
    assert!(matches!(
        EventLog::<InteractionEvent>::read_all(&path),
        Err(LogError::Format { .. })
    ));
}

fn random_event(rng: &mut ChaCha8Rng, users: usize, items: usize) -> InteractionEvent {
    let kind = EventKind::ALL[rng.random_range(0..EventKind::ALL.len())];
    let value = match kind {
        EventKind::Rating => Some(rng.random_range(1..=5) as f64),
        EventKind::ViewTime => Some(rng.random_range(0.0..1200.0)),
        _ => None,
    };
    InteractionEvent::new(
        &format!("u{}", rng.random_range(0..users)),
        &format!("{}", rng.random_range(1..=items)),
        kind,
        value,
    )
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(8))]

    #[test]
    fn random_event_sequences_keep_invariants(seed in any::<u64>()) {
        let (mut g, mut store) = setup(30, 3);
        let mut l = FeedbackLearner::default();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        for _ in 0..1000 {
            let e = random_event(&mut rng, 3, 30);
            l.process_event(&mut g, &mut store, &e).unwrap();
        }
        prop_assert!(g.validate().is_ok(), "{:?}", g.validate());
        for s in store.iter() {
            prop_assert!(s.profile.vark.is_valid());
            let n: f64 = s.profile.embedding.iter().map(|x| (*x as f64).powi(2)).sum::<f64>().sqrt();
            prop_assert!((n - 1.0).abs() < 1e-4);
            prop_assert!(s.vark_history.len() <= crate::profiling::DRIFT_HISTORY);
            let uid = g.id_of(&user_key(&s.profile.user_id)).unwrap();
            prop_assert_eq!(&g.node(uid).unwrap().embedding, &s.profile.embedding);
        }
    }

    #[test]
    fn serendipity_keeps_length_and_prefix(rate in 0.0f64..=1.0, seed in any::<u64>(), k in 1usize..20) {
        let (g, _) = setup(60, 1);
        let refs: Vec<String> = (1..=k).map(|i| i.to_string()).collect();
        let list = list_of(&g, &refs.iter().map(|s| s.as_str()).collect::<Vec<_>>());
        let r = inject_serendipity(&list, &g, None, &["action".into()], (1, 5), rate, seed);
        prop_assert_eq!(r.list.len(), k);
        let keep = ((1.0 - rate) * k as f64 - 1e-9).ceil() as usize;
        prop_assert_eq!(&r.list.items[..keep.min(k)], &list.items[..keep.min(k)]);
        prop_assert!(r.injections.len() <= serendipity_slots(rate, k));
    }

    #[test]
    fn detail_monotone_in_capacity(a in 0.0f64..=1.0, b in 0.0f64..=1.0) {
        let (lo, hi) = if a <= b { (a, b) } else { (b, a) };
        prop_assert!(detail_for_capacity(lo) <= detail_for_capacity(hi));
    }

    #[test]
    fn template_has_two_or_three_sentences(
        w in proptest::array::uniform4(0.0f64..1.0),
        goal in 0usize..4,
        names in proptest::collection::vec("[A-Za-z.!? ]{0,12}", 0..4),
        title in "[A-Za-z0-9.,!? ()]{0,20}",
        complexity in 1u8..=5,
    ) {
        let user = user_with(
            if w.iter().sum::<f64>() > 0.0 { w } else { [1.0; 4] },
            Goal::ALL[goal],
        );
        let mut item = matrix_like();
        item.complexity = complexity;
        item.entities = names
            .iter()
            .map(|n| Entity { name: n.clone(), kind: "x".into(), description: String::new(), embedding: Vec::new() })
            .collect();
        let interests: Vec<String> = names.iter().take(1).map(|n| crate::enrichment::normalize_entity_name(n)).collect();
        let text = template_explanation(&title, &item, &user, &interests);
        let n = sentence_count(&text);
        prop_assert!((2..=3).contains(&n), "{} sentences: {}", n, text);
    }
}
