use super::*;
use crate::cognition::Device;
use crate::profiling::Gender;
use crate::provider::{DecodingParams, ProviderError};

fn engine() -> Engine {
    let cfg = EngineConfig {
        embedding_dim: 64,
        ..Default::default()
    };
    Engine::new(cfg, &load_catalog(None).unwrap()).unwrap()
}

fn demo() -> Demographics {
    Demographics {
        age: 25,
        gender: Gender::Female,
        occupation: 12,
    }
}

fn onboarded(e: &mut Engine) -> (String, String) {
    let (uid, _) = e.create_user(demo(), Goal::Entertainment, None, 0).unwrap();
    e.submit_questionnaire(&uid, &[Channel::Visual; 16], 0).unwrap();
    let s = e.start_session(&uid, SessionContext::default(), 0).unwrap();
    (uid, s.session_id)
}

#[test]
fn demo_catalogue_loads() {
    let items = load_catalog(None).unwrap();
    assert_eq!(items.len(), 48);
    assert_eq!(engine().item_count(), 48);
}

#[test]
fn idempotency_key_returns_same_user() {
    let mut e = engine();
    let (a, created) = e.create_user(demo(), Goal::Learning, Some("k1".into()), 0).unwrap();
    assert!(created);
    let (b, created) = e.create_user(demo(), Goal::Learning, Some("k1".into()), 0).unwrap();
    assert!(!created);
    assert_eq!(a, b);
    let (c, _) = e.create_user(demo(), Goal::Learning, Some("k2".into()), 0).unwrap();
    assert_ne!(a, c);
    assert_eq!(e.profiles().profile(&a).unwrap().vark, VarkVector::UNIFORM);
}

#[test]
fn questionnaire_scores_and_rejects_short_answers() {
    let mut e = engine();
    let (uid, _) = e.create_user(demo(), Goal::Learning, None, 0).unwrap();
    let v = e.submit_questionnaire(&uid, &[Channel::Visual; 16], 0).unwrap();
    assert_eq!(v.components(), [1.0, 0.0, 0.0, 0.0]);
    let err = e.submit_questionnaire(&uid, &[Channel::Visual; 15], 0).unwrap_err();
    assert!(matches!(
        err,
        EngineError::Profile(ProfileError::InvalidAnswerCount(15))
    ));
    assert!(matches!(
        e.submit_questionnaire("nobody", &[Channel::Visual; 16], 0),
        Err(EngineError::UnknownUser(_))
    ));
}

#[test]
fn resubmission_resets_drift() {
    let mut e = engine();
    let (uid, sid) = onboarded(&mut e);
    for item in ["1", "2", "3", "4", "5", "6", "7", "8", "9", "10"] {
        e.feedback(&sid, item, EventKind::Complete, None, None, 0).unwrap();
    }
    assert!(e.profile_view(&uid).unwrap().drift_history.len() >= 2);
    e.submit_questionnaire(&uid, &[Channel::Reading; 16], 0).unwrap();
    let view = e.profile_view(&uid).unwrap();
    assert_eq!(view.drift_history.len(), 1);
    assert_eq!(view.vark.components(), [0.0, 0.0, 1.0, 0.0]);
    assert_eq!(e.learner().stats(&uid).map(|s| s.since_refine).unwrap_or(0), 0);
}

#[test]
fn mobile_evening_session_capacity() {
    let mut e = engine();
    let (uid, _) = e.create_user(demo(), Goal::Entertainment, None, 0).unwrap();
    let ctx = SessionContext {
        hour: 20,
        device: Device::Mobile,
        ..SessionContext::default()
    };
    let s = e.start_session(&uid, ctx, 0).unwrap();
    assert!((s.state.capacity - 0.8).abs() < 1e-12);
    assert!(s.context.stated_goal.is_none());
    assert!(matches!(
        e.start_session("ghost", SessionContext::default(), 0),
        Err(EngineError::UnknownUser(_))
    ));
}

#[test]
fn recommendations_are_complete_and_repeatable() {
    let mut e = engine();
    let (_, sid) = onboarded(&mut e);
    let a = e.recommendations(&sid, 10, 0).unwrap();
    assert_eq!(a.items.len(), 10);
    assert!(a.items.iter().all(|i| !i.explanation.is_empty()));
    assert_eq!(a.plan.items.len(), a.items.len());
    assert_eq!(a.items.iter().filter(|i| i.serendipitous).count(), 1);
    let b = e.recommendations(&sid, 10, 1).unwrap();
    assert_eq!(a, b);
    let stats = e.learner().stats(&a.user_id).unwrap();
    assert_eq!(stats.events_by_kind[&EventKind::Impression], 20);
}

#[test]
fn positive_ratings_change_the_ordering() {
    let mut e = engine();
    let (_, sid) = onboarded(&mut e);
    let before: Vec<String> = e
        .recommendations(&sid, 10, 0)
        .unwrap()
        .items
        .into_iter()
        .map(|i| i.item_id)
        .collect();
    // Documentaries and their neighbours.
    for item in ["9", "21", "36"] {
        e.feedback(&sid, item, EventKind::Rating, Some(5.0), None, 0).unwrap();
    }
    let after: Vec<String> = e
        .recommendations(&sid, 10, 0)
        .unwrap()
        .items
        .into_iter()
        .map(|i| i.item_id)
        .collect();
    assert_ne!(before, after);
}

#[test]
fn feedback_validation_and_skip() {
    let mut e = engine();
    let (uid, sid) = onboarded(&mut e);
    let err = e
        .feedback(&sid, "1", EventKind::Rating, Some(9.0), None, 0)
        .unwrap_err();
    assert!(matches!(err, EngineError::Adapt(AdaptError::InvalidEvent(_))));
    assert!(matches!(
        e.feedback(&sid, "999", EventKind::Click, None, None, 0),
        Err(EngineError::UnknownItem(_))
    ));
    assert!(matches!(
        e.feedback("s99", "1", EventKind::Click, None, None, 0),
        Err(EngineError::UnknownSession(_))
    ));
    e.feedback(&sid, "1", EventKind::Rating, Some(3.0), None, 0).unwrap();
    let w0 = e.interaction_weight(&uid, "1").unwrap();
    e.feedback(&sid, "1", EventKind::Skip, None, None, 0).unwrap();
    let w1 = e.interaction_weight(&uid, "1").unwrap();
    assert!(w1 < w0);
}

#[test]
fn duplicate_client_event_ids_are_ignored() {
    let mut e = engine();
    let (uid, sid) = onboarded(&mut e);
    let r = e
        .feedback(&sid, "1", EventKind::Click, None, Some("c1".into()), 0)
        .unwrap();
    assert!(!r.duplicate);
    let w = e.interaction_weight(&uid, "1").unwrap();
    let r = e
        .feedback(&sid, "1", EventKind::Click, None, Some("c1".into()), 0)
        .unwrap();
    assert!(r.duplicate);
    assert_eq!(e.interaction_weight(&uid, "1").unwrap(), w);
}

#[test]
fn profile_history_and_entities() {
    let mut e = engine();
    let (uid, _) = e.create_user(demo(), Goal::Research, None, 0).unwrap();
    assert_eq!(e.profile_view(&uid).unwrap().drift_history.len(), 1);
    assert!(matches!(e.profile_view("nope"), Err(EngineError::UnknownUser(_))));
    let sid = e.start_session(&uid, SessionContext::default(), 0).unwrap().session_id;
    for i in 1..=45 {
        e.feedback(&sid, &i.to_string(), EventKind::Wishlist, None, None, 0)
            .unwrap();
    }
    let v = e.profile_view(&uid).unwrap();
    assert!(v.drift_history.len() >= 2 && v.drift_history.len() <= DRIFT_HISTORY);
    assert_eq!(*v.drift_history.last().unwrap(), v.vark);
    assert!(!v.top_entities.is_empty());
    assert!(v.top_entities.windows(2).all(|w| w[0].weight >= w[1].weight));
}

#[test]
fn empty_catalogue_is_reported() {
    let cfg = EngineConfig {
        embedding_dim: 16,
        ..Default::default()
    };
    let mut e = Engine::new(cfg, &[]).unwrap();
    let (_, sid) = onboarded(&mut e);
    assert!(matches!(e.recommendations(&sid, 10, 0), Err(EngineError::EmptyCatalog)));
}

struct Failing;

impl GenerationProvider for Failing {
    fn identity(&self) -> &str {
        "failing"
    }
    fn generate(&self, _: &str, _: &DecodingParams) -> Result<String, ProviderError> {
        Err(ProviderError::Timeout)
    }
}

#[test]
fn failing_provider_degrades_to_deterministic_paths() {
    let mut e = engine().with_generation(Arc::new(Failing));
    let (_, sid) = onboarded(&mut e);
    let p = e.recommendations(&sid, 10, 0).unwrap();
    assert_eq!(p.items.len(), 10);
    assert!(p.degraded);
    assert!(p
        .items
        .iter()
        .all(|i| i.explanation_source == ExplanationSource::Template));

    let mut plain = engine();
    let (_, sid) = onboarded(&mut plain);
    let q = plain.recommendations(&sid, 10, 0).unwrap();
    let ids = |p: &RecommendationPayload| p.items.iter().map(|i| i.item_id.clone()).collect::<Vec<_>>();
    assert_eq!(ids(&p), ids(&q));
}

fn scripted(e: &mut Engine) {
    let (uid, sid) = onboarded(e);
    let (u2, _) = e.create_user(demo(), Goal::Learning, Some("idem".into()), 5).unwrap();
    e.submit_questionnaire(&u2, &[Channel::Kinesthetic; 16], 6).unwrap();
    let s2 = e.start_session(&u2, SessionContext::default(), 7).unwrap().session_id;
    e.recommendations(&sid, 10, 8).unwrap();
    let kinds = [
        (EventKind::Click, None),
        (EventKind::Rating, Some(4.0)),
        (EventKind::Skip, None),
        (EventKind::ViewTime, Some(240.0)),
        (EventKind::Complete, None),
        (EventKind::Wishlist, None),
    ];
    for i in 0..30 {
        let (k, v) = kinds[i % kinds.len()];
        let item = ((i * 7) % 48 + 1).to_string();
        let s = if i % 3 == 0 { &s2 } else { &sid };
        e.feedback(s, &item, k, v, Some(format!("c{i}")), 10 + i as i64)
            .unwrap();
    }
    e.submit_questionnaire(&uid, &[Channel::Auditory; 16], 99).unwrap();
}

#[test]
fn restart_replays_to_identical_state() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("events.log");
    let mut live = engine();
    assert_eq!(live.attach_log(&path).unwrap(), 0);
    scripted(&mut live);

    let mut restored = engine();
    let n = restored.attach_log(&path).unwrap();
    assert!(n > 40);
    assert!(restored.same_state(&live));

    // Counters survive the restart too.
    let (next, _) = restored.create_user(demo(), Goal::Purchase, None, 0).unwrap();
    let (expected, _) = live.create_user(demo(), Goal::Purchase, None, 0).unwrap();
    assert_eq!(next, expected);
    let (again, created) = restored
        .create_user(demo(), Goal::Learning, Some("idem".into()), 0)
        .unwrap();
    assert!(!created);
    assert_eq!(again, "u2");
}

#[test]
fn log_records_round_trip_as_json() {
    let r = LogRecord::Questionnaire {
        user_id: "u1".into(),
        answers: vec![Channel::Visual, Channel::Kinesthetic],
        timestamp_ms: 3,
    };
    let s = serde_json::to_string(&r).unwrap();
    assert!(s.contains("\"type\":\"questionnaire\""));
    assert_eq!(serde_json::from_str::<LogRecord>(&s).unwrap(), r);
}
