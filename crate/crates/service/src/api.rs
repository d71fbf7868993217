use axum::extract::{FromRequest, FromRequestParts, Request, State};
use axum::http::{HeaderMap, StatusCode};
use axum::middleware::Next;
use axum::response::{IntoResponse, Response};
use axum::Json;
use coldstart_core::adaptation::EventKind;
use coldstart_core::cognition::{CognitiveState, Device, Pace, SessionContext};
use coldstart_core::engine::Engine;
use coldstart_core::profiling::{Demographics, Goal, Questionnaire};
use coldstart_core::vark::{Channel, VarkVector};
use serde::{Deserialize, Serialize};
use serde_json::json;

use crate::error::ApiError;
use crate::{AppState, API_KEY_HEADER, IDEMPOTENCY_HEADER, TEST_CLOCK_HEADER};

#[derive(FromRequest)]
#[from_request(via(axum::Json), rejection(ApiError))]
pub struct ApiJson<T>(pub T);

#[derive(FromRequestParts)]
#[from_request(via(axum::extract::Path), rejection(ApiError))]
pub struct ApiPath<T>(pub T);

#[derive(FromRequestParts)]
#[from_request(via(axum::extract::Query), rejection(ApiError))]
pub struct ApiQuery<T>(pub T);

/// Runs engine work off the async runtime; providers may block on network.
async fn blocking<T: Send + 'static>(
    state: &AppState,
    f: impl FnOnce(&AppState) -> Result<T, ApiError> + Send + 'static,
) -> Result<T, ApiError> {
    let s = state.clone();
    tokio::task::spawn_blocking(move || f(&s))
        .await
        .map_err(|e| ApiError::internal(format!("worker failed: {e}")))?
}

fn now_ms(state: &AppState, headers: &HeaderMap) -> Result<i64, ApiError> {
    let Some(v) = headers.get(TEST_CLOCK_HEADER) else {
        return Ok((state.clock)());
    };
    if !state.config.service.test_mode {
        return Err(ApiError::bad_request(format!(
            "{TEST_CLOCK_HEADER} is only accepted in test mode"
        )));
    }
    v.to_str()
        .ok()
        .and_then(|s| s.trim().parse::<i64>().ok())
        .ok_or_else(|| ApiError::bad_request(format!("{TEST_CLOCK_HEADER} must be epoch milliseconds")))
}

/// UTC hour of day and weekday (0 = Monday) of an epoch-millisecond instant.
pub fn hour_and_weekday(ms: i64) -> (u8, u8) {
    let hour = ms.div_euclid(3_600_000).rem_euclid(24) as u8;
    // 1970-01-01 was a Thursday.
    let weekday = (ms.div_euclid(86_400_000) + 3).rem_euclid(7) as u8;
    (hour, weekday)
}

fn parse_goal(s: &str) -> Result<Goal, ApiError> {
    s.parse::<Goal>().map_err(|_| {
        ApiError::bad_request(format!("unknown goal {s:?}"))
            .with_details(json!({ "valid_goals": Goal::ALL.map(Goal::as_str) }))
    })
}

fn kind_name(k: EventKind) -> String {
    serde_json::to_value(k)
        .ok()
        .and_then(|v| v.as_str().map(String::from))
        .unwrap_or_default()
}

fn parse_kind(s: &str) -> Result<EventKind, ApiError> {
    EventKind::ALL
        .into_iter()
        .find(|k| kind_name(*k).eq_ignore_ascii_case(s.trim()))
        .ok_or_else(|| {
            ApiError::unprocessable(format!("unknown event kind {s:?}"))
                .with_details(json!({ "valid_kinds": EventKind::ALL.map(kind_name) }))
        })
}

pub async fn require_api_key(State(state): State<AppState>, req: Request, next: Next) -> Response {
    if let Some(expected) = &state.config.service.api_key {
        let ok = req
            .headers()
            .get(API_KEY_HEADER)
            .and_then(|v| v.to_str().ok())
            .is_some_and(|v| v == expected);
        if !ok {
            return ApiError::new(StatusCode::UNAUTHORIZED, "unauthorized", "missing or wrong API key").into_response();
        }
    }
    next.run(req).await
}

pub async fn not_found() -> ApiError {
    ApiError::not_found("no such route")
}

pub async fn healthz(State(state): State<AppState>) -> Json<serde_json::Value> {
    let e = state.engine.read();
    Json(json!({
        "status": "ok",
        "items": e.item_count(),
        "users": e.profiles().len(),
    }))
}

pub async fn questionnaire() -> Json<&'static Questionnaire> {
    Json(Questionnaire::builtin())
}

#[derive(Debug, Deserialize)]
pub struct CreateUserBody {
    #[serde(default)]
    pub demographics: Demographics,
    pub goal: String,
}

#[derive(Debug, Serialize)]
pub struct CreateUserResponse {
    pub user_id: String,
}

pub async fn create_user(
    State(state): State<AppState>,
    headers: HeaderMap,
    ApiJson(body): ApiJson<CreateUserBody>,
) -> Result<(StatusCode, Json<CreateUserResponse>), ApiError> {
    let goal = parse_goal(&body.goal)?;
    let key = headers
        .get(IDEMPOTENCY_HEADER)
        .map(|v| v.to_str().map(str::to_string))
        .transpose()
        .map_err(|_| ApiError::bad_request("idempotency key must be visible ASCII"))?;
    let now = now_ms(&state, &headers)?;
    let (user_id, created) = blocking(&state, move |s| {
        Ok(s.engine.write().create_user(body.demographics, goal, key, now)?)
    })
    .await?;
    let status = if created { StatusCode::CREATED } else { StatusCode::OK };
    Ok((status, Json(CreateUserResponse { user_id })))
}

#[derive(Debug, Deserialize)]
pub struct QuestionnaireBody {
    /// One of `V`, `A`, `R`, `K` per question.
    pub answers: Vec<String>,
}

#[derive(Debug, Serialize)]
pub struct QuestionnaireResponse {
    pub user_id: String,
    pub vark: VarkVector,
}

pub async fn submit_questionnaire(
    State(state): State<AppState>,
    ApiPath(user_id): ApiPath<String>,
    headers: HeaderMap,
    ApiJson(body): ApiJson<QuestionnaireBody>,
) -> Result<Json<QuestionnaireResponse>, ApiError> {
    let answers = body
        .answers
        .iter()
        .enumerate()
        .map(|(i, a)| {
            let mut chars = a.trim().chars();
            match (chars.next().and_then(Channel::from_letter), chars.next()) {
                (Some(c), None) => Ok(c),
                _ => Err(
                    ApiError::unprocessable(format!("answer {} must be one of V, A, R, K", i + 1))
                        .with_details(json!({ "index": i, "answer": a })),
                ),
            }
        })
        .collect::<Result<Vec<_>, _>>()?;
    let now = now_ms(&state, &headers)?;
    let id = user_id.clone();
    let vark = blocking(&state, move |s| {
        Ok(s.engine.write().submit_questionnaire(&id, &answers, now)?)
    })
    .await?;
    Ok(Json(QuestionnaireResponse { user_id, vark }))
}

#[derive(Debug, Deserialize)]
pub struct SessionBody {
    pub user_id: String,
    pub device: Device,
    #[serde(default)]
    pub stated_goal: Option<String>,
    #[serde(default)]
    pub available_minutes: Option<f64>,
    #[serde(default)]
    pub pace: Option<Pace>,
}

#[derive(Debug, Serialize)]
pub struct SessionResponse {
    pub session_id: String,
    pub user_id: String,
    pub context: SessionContext,
    pub cognitive_state: CognitiveState,
}

pub async fn create_session(
    State(state): State<AppState>,
    headers: HeaderMap,
    ApiJson(body): ApiJson<SessionBody>,
) -> Result<(StatusCode, Json<SessionResponse>), ApiError> {
    let stated_goal = body.stated_goal.as_deref().map(parse_goal).transpose()?;
    let now = now_ms(&state, &headers)?;
    let (hour, day_of_week) = hour_and_weekday(now);
    let ctx = SessionContext {
        hour,
        day_of_week,
        device: body.device,
        pace: body.pace.unwrap_or(Pace::Moderate),
        stated_goal,
        available_minutes: body.available_minutes,
        ..SessionContext::default()
    };
    let user_id = body.user_id;
    let session = blocking(&state, move |s| {
        Ok(s.engine.write().start_session(&user_id, ctx, now)?)
    })
    .await?;
    Ok((
        StatusCode::CREATED,
        Json(SessionResponse {
            session_id: session.session_id,
            user_id: session.user_id,
            context: session.context,
            cognitive_state: session.state,
        }),
    ))
}

#[derive(Debug, Deserialize)]
pub struct RecommendationQuery {
    pub k: Option<usize>,
}

pub async fn recommendations(
    State(state): State<AppState>,
    ApiPath(session_id): ApiPath<String>,
    ApiQuery(q): ApiQuery<RecommendationQuery>,
    headers: HeaderMap,
) -> Result<Response, ApiError> {
    let max_k = state.config.service.max_k;
    let k = q.k.unwrap_or(state.config.service.default_k);
    if k == 0 || k > max_k {
        return Err(ApiError::bad_request(format!("k must lie in 1..={max_k}")).with_details(json!({ "k": k })));
    }
    let now = now_ms(&state, &headers)?;
    let payload = blocking(&state, move |s| {
        let payload = s.engine.read().build_recommendations(&session_id, k)?;
        s.engine.write().log_impressions(&payload, now)?;
        Ok(payload)
    })
    .await?;
    Ok(Json(payload).into_response())
}

#[derive(Debug, Deserialize)]
pub struct FeedbackBody {
    pub session_id: String,
    pub item_id: String,
    pub kind: String,
    #[serde(default)]
    pub value: Option<f64>,
    #[serde(default)]
    pub client_event_id: Option<String>,
}

#[derive(Debug, Serialize)]
pub struct FeedbackResponse {
    pub accepted: bool,
    pub duplicate: bool,
    pub signal: f64,
    pub refined_vark: Option<VarkVector>,
}

pub async fn feedback(
    State(state): State<AppState>,
    headers: HeaderMap,
    ApiJson(body): ApiJson<FeedbackBody>,
) -> Result<(StatusCode, Json<FeedbackResponse>), ApiError> {
    let kind = parse_kind(&body.kind)?;
    let now = now_ms(&state, &headers)?;
    let receipt = blocking(&state, move |s| {
        let mut e = s.engine.write();
        Ok(Engine::feedback(
            &mut e,
            &body.session_id,
            &body.item_id,
            kind,
            body.value,
            body.client_event_id,
            now,
        )?)
    })
    .await?;
    Ok((
        StatusCode::ACCEPTED,
        Json(FeedbackResponse {
            accepted: true,
            duplicate: receipt.duplicate,
            signal: receipt.signal,
            refined_vark: receipt.refined_vark,
        }),
    ))
}

pub async fn profile(State(state): State<AppState>, ApiPath(user_id): ApiPath<String>) -> Result<Response, ApiError> {
    let view = state.engine.read().profile_view(&user_id)?;
    Ok(Json(view).into_response())
}
