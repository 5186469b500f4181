//! HTTP handlers. Every job endpoint authenticates the bearer token,
//! authorizes through the VO policy and then delegates to the job manager.

use std::collections::HashMap;
use std::sync::atomic::{AtomicI64, Ordering};
use std::sync::Arc;

use axum::body::Bytes;
use axum::extract::{DefaultBodyLimit, Multipart, Path, State};
use axum::http::{header, HeaderMap, HeaderValue, StatusCode};
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post, put};
use axum::{Extension, Json, Router};
use chrono::{DateTime, TimeDelta, Utc};
use lgrid_delegation::myproxy::{myproxy_get, MyProxyEndpoint};
use lgrid_delegation::{
    decode_frame, encode_frame, ActiveJob, DelegationMessage, DelegationService, DelegationSession,
    FaultCode, MyProxyRenewer, PeerIdentity, ProxyRenewer, ProxyStore, RenewalAction,
    RenewalPolicy, SessionId,
};
use lgrid_jobs::{parse_jdl, JobError, JobManager, ProxyGrant};
use lgrid_pki::{DistinguishedName, ProxyCredential};
use tokio::sync::Mutex;

use crate::policy::{DenyReason, Operation, VoPolicy};
use crate::tokens::{ApiSession, TokenTable};
use crate::views::{
    ErrorBody, JobList, JobStatus, JobView, LogonRequest, LogonResponse, RenewalRegistration,
    Submitted, FRAME_CONTENT_TYPE, GZIP_CONTENT_TYPE, MISSING_HEADER, TOKEN_HEADER, VO_HEADER,
};

pub const MAX_BODY_BYTES: usize = 64 << 20;

/// Wall clock with an adjustable offset, so tests can move time forward.
#[derive(Debug, Default)]
pub struct Clock {
    offset_ms: AtomicI64,
}

impl Clock {
    pub fn now(&self) -> DateTime<Utc> {
        Utc::now() + TimeDelta::milliseconds(self.offset_ms.load(Ordering::Relaxed))
    }

    pub fn advance(&self, by: TimeDelta) {
        self.offset_ms
            .fetch_add(by.num_milliseconds(), Ordering::Relaxed);
    }
}

/// Per-connection state: the verified client certificate, if any, and the
/// connection's single delegation session.
#[derive(Debug, Clone)]
pub struct ConnectionContext {
    pub peer: Option<PeerIdentity>,
    pub session: Arc<Mutex<Option<DelegationSession>>>,
}

impl ConnectionContext {
    pub fn new(peer: Option<PeerIdentity>) -> Self {
        ConnectionContext {
            peer,
            session: Arc::default(),
        }
    }
}

/// Certless delegation sessions between Init and SignedProxy, keyed by
/// their unguessable id. Browsers do not pin requests to one connection,
/// so these sessions cannot live in the connection context.
#[derive(Debug, Default)]
pub struct PendingSessions {
    sessions: std::sync::Mutex<HashMap<SessionId, DelegationSession>>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct PendingFull;

impl PendingSessions {
    pub const CAPACITY: usize = 1024;

    /// Drops sessions past their deadline first; refuses when still full.
    pub fn insert(
        &self,
        session: DelegationSession,
        now: DateTime<Utc>,
    ) -> Result<(), PendingFull> {
        let mut sessions = self.sessions.lock().expect("pending sessions");
        sessions.retain(|_, s| s.deadline() >= now);
        if sessions.len() >= Self::CAPACITY {
            return Err(PendingFull);
        }
        sessions.insert(session.id().clone(), session);
        Ok(())
    }

    /// Removes the session: each id is usable for exactly one SignedProxy.
    pub fn take(&self, id: &SessionId) -> Option<DelegationSession> {
        self.sessions.lock().expect("pending sessions").remove(id)
    }

    pub fn len(&self) -> usize {
        self.sessions.lock().expect("pending sessions").len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

pub struct AppState {
    pub jobs: Arc<JobManager>,
    pub store: Arc<ProxyStore>,
    pub delegation: DelegationService,
    pub tokens: TokenTable,
    pub policy: VoPolicy,
    pub renewal: RenewalPolicy,
    pub myproxy: Option<MyProxyEndpoint>,
    pub renewer: Option<Arc<MyProxyRenewer>>,
    pub clock: Clock,
    pub require_client_certificate: bool,
    pub pending: PendingSessions,
}

/// A request that passed [`AppState::authorize`].
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Authorized {
    pub session: ApiSession,
    pub vo: String,
    pub grant: ProxyGrant,
}

impl AppState {
    /// Allows iff the token is known, its user's proxy is unexpired and the
    /// VO policy grants the operation.
    pub fn authorize(
        &self,
        token: Option<&str>,
        vo: Option<&str>,
        op: Operation,
        now: DateTime<Utc>,
    ) -> Result<Authorized, DenyReason> {
        let session = token
            .and_then(|t| self.tokens.lookup(t))
            .ok_or(DenyReason::InvalidToken)?;
        let proxy = self
            .store
            .active(&session.user_id, now)
            .ok_or(DenyReason::ProxyExpired)?;
        let vo = self.policy.check(&session.dn, vo, op)?;
        Ok(Authorized {
            session,
            vo,
            grant: ProxyGrant {
                fingerprint: proxy.fingerprint,
                not_after: proxy.not_after,
            },
        })
    }

    /// One maintenance sweep: renew expiring proxies of users with active
    /// jobs, then abort active jobs whose owner has no valid proxy left.
    pub async fn maintain(&self) -> Vec<RenewalAction> {
        let now = self.clock.now();
        let active = self.jobs.active_jobs();
        let jobs: Vec<ActiveJob> = active
            .iter()
            .map(|r| ActiveJob {
                job: r.id.to_string(),
                user: r.owner.clone(),
            })
            .collect();
        let renewer = self.renewer.as_deref().map(|r| r as &dyn ProxyRenewer);
        let actions =
            lgrid_delegation::renew_if_needed(&self.store, &jobs, &self.renewal, now, renewer)
                .await;
        for action in &actions {
            tracing::info!(action = action.name(), user = %action.user(), jobs = action.jobs().len(), "renewal");
        }
        let now = self.clock.now();
        for record in active {
            if self.store.active(&record.owner, now).is_none() {
                if let Err(e) = self.jobs.abort(record.id.as_str(), "proxy-expired", now) {
                    tracing::debug!(job = %record.id, error = %e, "abort skipped");
                }
            }
        }
        actions
    }
}

#[derive(Debug)]
pub struct ApiError {
    pub status: StatusCode,
    pub code: String,
    pub detail: String,
}

impl ApiError {
    pub fn new(status: StatusCode, code: impl Into<String>, detail: impl Into<String>) -> Self {
        ApiError {
            status,
            code: code.into(),
            detail: detail.into(),
        }
    }
}

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        (
            self.status,
            Json(ErrorBody {
                error: self.code,
                detail: self.detail,
            }),
        )
            .into_response()
    }
}

impl From<DenyReason> for ApiError {
    fn from(reason: DenyReason) -> Self {
        let status = match reason {
            DenyReason::InvalidToken => StatusCode::UNAUTHORIZED,
            _ => StatusCode::FORBIDDEN,
        };
        ApiError::new(status, reason.as_str(), format!("request denied: {reason}"))
    }
}

impl From<JobError> for ApiError {
    fn from(err: JobError) -> Self {
        let status = match &err {
            JobError::NotAuthorized(_) => StatusCode::FORBIDDEN,
            JobError::Expand(_) | JobError::Sandbox(_) => StatusCode::BAD_REQUEST,
            // A stranger's job is indistinguishable from a missing one.
            JobError::NotFound(_) | JobError::NotOwner => StatusCode::NOT_FOUND,
            JobError::AlreadyTerminal(_)
            | JobError::WrongState(_)
            | JobError::IllegalTransition { .. } => StatusCode::CONFLICT,
            JobError::Io(_) => StatusCode::INTERNAL_SERVER_ERROR,
        };
        let (code, detail) = match &err {
            JobError::NotOwner => ("not-found", "no such job".to_owned()),
            other => (other.code(), other.to_string()),
        };
        ApiError::new(status, code, detail)
    }
}

type ApiResult<T> = Result<T, ApiError>;

fn bearer(headers: &HeaderMap) -> Option<&str> {
    if let Some(value) = headers
        .get(header::AUTHORIZATION)
        .and_then(|v| v.to_str().ok())
    {
        return value.strip_prefix("Bearer ").map(str::trim);
    }
    headers.get(TOKEN_HEADER).and_then(|v| v.to_str().ok())
}

fn authorize(app: &AppState, headers: &HeaderMap, op: Operation) -> ApiResult<Authorized> {
    let vo = headers.get(VO_HEADER).and_then(|v| v.to_str().ok());
    Ok(app.authorize(bearer(headers), vo, op, app.clock.now())?)
}

fn fault_status(code: FaultCode) -> StatusCode {
    match code {
        FaultCode::DnMismatch => StatusCode::FORBIDDEN,
        FaultCode::BadState | FaultCode::UnknownSession => StatusCode::CONFLICT,
        FaultCode::SessionExpired => StatusCode::REQUEST_TIMEOUT,
        FaultCode::Internal => StatusCode::INTERNAL_SERVER_ERROR,
        FaultCode::KeyMismatch
        | FaultCode::ValidationFailed
        | FaultCode::Malformed
        | FaultCode::Substitution => StatusCode::BAD_REQUEST,
    }
}

fn frame_response(reply: &DelegationMessage, token: Option<String>) -> Response {
    let status = match reply {
        DelegationMessage::Fault { code, .. } => fault_status(*code),
        _ => StatusCode::OK,
    };
    let mut response = (
        status,
        [(header::CONTENT_TYPE, FRAME_CONTENT_TYPE)],
        encode_frame(reply),
    )
        .into_response();
    if let Some(value) = token.and_then(|t| HeaderValue::from_str(&t).ok()) {
        response.headers_mut().insert(TOKEN_HEADER, value);
    }
    response
}

/// Issues a token when `reply` is an Ack.
fn finish_delegation(
    app: &AppState,
    session: &DelegationSession,
    reply: &DelegationMessage,
    now: DateTime<Utc>,
) -> Response {
    let token = match (reply, session.peer()) {
        (DelegationMessage::Ack { .. }, Some(peer)) => match app.tokens.issue(&peer.dn, now) {
            Ok(token) => Some(token),
            Err(e) => {
                let fault =
                    DelegationMessage::fault(FaultCode::Internal, format!("token journal: {e}"));
                return frame_response(&fault, None);
            }
        },
        _ => None,
    };
    frame_response(reply, token)
}

/// One delegation message per request. With a client certificate the
/// session lives as long as the connection; without one it is found by id
/// in [`PendingSessions`]. The Ack carries a fresh API token in a header.
async fn delegate(
    State(app): State<Arc<AppState>>,
    Extension(ctx): Extension<ConnectionContext>,
    body: Bytes,
) -> Response {
    let now = app.clock.now();
    let msg: DelegationMessage = match decode_frame(&body) {
        Ok(msg) => msg,
        Err(e) => {
            return frame_response(
                &DelegationMessage::fault(FaultCode::Malformed, e.to_string()),
                None,
            )
        }
    };
    let Some(peer) = ctx.peer.clone() else {
        if app.require_client_certificate {
            let fault = DelegationMessage::fault(
                FaultCode::DnMismatch,
                "delegation requires a client certificate",
            );
            return frame_response(&fault, None);
        }
        return delegate_certless(&app, msg, now);
    };
    let mut slot = ctx.session.lock().await;
    let session = slot.get_or_insert_with(|| app.delegation.open_session(peer, now));
    let reply = app.delegation.handle(session, msg, now);
    finish_delegation(&app, session, &reply, now)
}

fn delegate_certless(app: &AppState, msg: DelegationMessage, now: DateTime<Utc>) -> Response {
    let mut session = match msg.session_id() {
        None => app.delegation.open_unauthenticated_session(now),
        Some(id) => match app.pending.take(id) {
            Some(session) => session,
            None => {
                let fault =
                    DelegationMessage::fault(FaultCode::UnknownSession, format!("no session {id}"));
                return frame_response(&fault, None);
            }
        },
    };
    let reply = app.delegation.handle(&mut session, msg, now);
    if !matches!(reply, DelegationMessage::CsrReply { .. }) {
        return finish_delegation(app, &session, &reply, now);
    }
    if app.pending.insert(session, now).is_err() {
        let fault =
            DelegationMessage::fault(FaultCode::Internal, "too many pending delegation sessions");
        return frame_response(&fault, None);
    }
    frame_response(&reply, None)
}

async fn submit(
    State(app): State<Arc<AppState>>,
    headers: HeaderMap,
    mut form: Multipart,
) -> ApiResult<Response> {
    let auth = authorize(&app, &headers, Operation::Submit)?;
    let bad = |detail: String| ApiError::new(StatusCode::BAD_REQUEST, "bad-request", detail);
    let mut jdl = None;
    let mut input = None;
    while let Some(field) = form.next_field().await.map_err(|e| bad(e.to_string()))? {
        match field.name() {
            Some("jdl") => jdl = Some(field.text().await.map_err(|e| bad(e.to_string()))?),
            Some("input") => input = Some(field.bytes().await.map_err(|e| bad(e.to_string()))?),
            other => return Err(bad(format!("unexpected form field {other:?}"))),
        }
    }
    let jdl = jdl.ok_or_else(|| bad("missing jdl field".into()))?;
    let descriptor = parse_jdl(&jdl)
        .map_err(|e| ApiError::new(StatusCode::BAD_REQUEST, "invalid-jdl", e.to_string()))?;
    let jobs = Arc::clone(&app.jobs);
    let now = app.clock.now();
    let ids = tokio::task::spawn_blocking(move || {
        jobs.submit(
            &descriptor,
            &auth.session.dn,
            input.as_deref(),
            Some(&auth.grant),
            now,
        )
    })
    .await
    .map_err(|e| ApiError::new(StatusCode::INTERNAL_SERVER_ERROR, "internal", e.to_string()))??;
    let body = Submitted {
        jobs: ids.iter().map(ToString::to_string).collect(),
    };
    Ok((StatusCode::CREATED, Json(body)).into_response())
}

async fn list(State(app): State<Arc<AppState>>, headers: HeaderMap) -> ApiResult<Json<JobList>> {
    let auth = authorize(&app, &headers, Operation::Status)?;
    let jobs = app
        .jobs
        .list(&auth.session.user_id)
        .iter()
        .map(JobView::from)
        .collect();
    Ok(Json(JobList { jobs }))
}

async fn status(
    State(app): State<Arc<AppState>>,
    headers: HeaderMap,
    Path(id): Path<String>,
) -> ApiResult<Json<JobStatus>> {
    let auth = authorize(&app, &headers, Operation::Status)?;
    let record = app.jobs.status(&id, &auth.session.dn)?;
    Ok(Json(JobStatus::from(&record)))
}

async fn cancel(
    State(app): State<Arc<AppState>>,
    headers: HeaderMap,
    Path(id): Path<String>,
) -> ApiResult<Json<JobStatus>> {
    let auth = authorize(&app, &headers, Operation::Cancel)?;
    let record = app.jobs.cancel(&id, &auth.session.dn, app.clock.now())?;
    Ok(Json(JobStatus::from(&record)))
}

async fn output(
    State(app): State<Arc<AppState>>,
    headers: HeaderMap,
    Path(id): Path<String>,
) -> ApiResult<Response> {
    let auth = authorize(&app, &headers, Operation::Output)?;
    let jobs = Arc::clone(&app.jobs);
    let now = app.clock.now();
    let fetched =
        tokio::task::spawn_blocking(move || jobs.fetch_output(&id, &auth.session.dn, now))
            .await
            .map_err(|e| {
                ApiError::new(StatusCode::INTERNAL_SERVER_ERROR, "internal", e.to_string())
            })??;
    let mut response = (
        StatusCode::OK,
        [(header::CONTENT_TYPE, GZIP_CONTENT_TYPE)],
        fetched.archive,
    )
        .into_response();
    if let Ok(value) = HeaderValue::from_str(&fetched.missing.join(",")) {
        response.headers_mut().insert(MISSING_HEADER, value);
    }
    Ok(response)
}

/// Obtains a proxy from the external repository on the caller's behalf and
/// issues a token for it.
async fn logon(
    State(app): State<Arc<AppState>>,
    Extension(ctx): Extension<ConnectionContext>,
    Json(req): Json<LogonRequest>,
) -> ApiResult<Json<LogonResponse>> {
    let endpoint = app.myproxy.as_ref().ok_or_else(|| {
        ApiError::new(
            StatusCode::NOT_FOUND,
            "no-repository",
            "no external repository configured",
        )
    })?;
    let lifetime = TimeDelta::seconds(
        req.lifetime_secs
            .unwrap_or(lgrid_delegation::DEFAULT_PROXY_LIFETIME.num_seconds()),
    );
    let (bundle, _) = myproxy_get(endpoint, &req.username, &req.passphrase, lifetime)
        .await
        .map_err(|e| {
            let status = if e.code().is_some() {
                StatusCode::FORBIDDEN
            } else {
                StatusCode::BAD_GATEWAY
            };
            ApiError::new(status, "repository-refused", e.to_string())
        })?;
    let user_dn: DistinguishedName = ProxyCredential::parse(&bundle)
        .map_err(|e| ApiError::new(StatusCode::BAD_GATEWAY, "repository-refused", e.to_string()))?
        .user_dn()
        .clone();
    if let Some(peer) = &ctx.peer {
        if peer.dn != user_dn {
            return Err(ApiError::new(
                StatusCode::FORBIDDEN,
                "dn-mismatch",
                "credential belongs to another user",
            ));
        }
    }
    let now = app.clock.now();
    let stored = app
        .store
        .put(bundle, now)
        .map_err(|e| ApiError::new(StatusCode::BAD_GATEWAY, "invalid-proxy", e.to_string()))?;
    let token = app
        .tokens
        .issue(&user_dn, now)
        .map_err(|e| ApiError::new(StatusCode::INTERNAL_SERVER_ERROR, "internal", e.to_string()))?;
    if let Some(renewer) = &app.renewer {
        renewer.register(stored.user_id.clone(), req.username, req.passphrase);
    }
    Ok(Json(LogonResponse {
        token,
        user_dn: user_dn.to_string(),
        proxy_fingerprint: stored.fingerprint,
        not_after: stored.not_after,
    }))
}

async fn register_renewal(
    State(app): State<Arc<AppState>>,
    headers: HeaderMap,
    Json(req): Json<RenewalRegistration>,
) -> ApiResult<StatusCode> {
    let auth = authorize(&app, &headers, Operation::Submit)?;
    let renewer = app.renewer.as_ref().ok_or_else(|| {
        ApiError::new(
            StatusCode::NOT_FOUND,
            "no-repository",
            "no external repository configured",
        )
    })?;
    renewer.register(auth.session.user_id, req.username, req.passphrase);
    Ok(StatusCode::NO_CONTENT)
}

pub fn router(state: Arc<AppState>, web_root: Option<&std::path::Path>) -> Router {
    let api = Router::new()
        .route("/delegate", post(delegate))
        .route("/jobs", post(submit).get(list))
        .route("/jobs/{id}", get(status).delete(cancel))
        .route("/jobs/{id}/output", get(output))
        .route("/myproxy-logon", post(logon))
        .route("/renewal", put(register_renewal))
        .layer(DefaultBodyLimit::max(MAX_BODY_BYTES))
        .with_state(state);
    match web_root {
        Some(root) => api.fallback_service(tower_http::services::ServeDir::new(root)),
        None => api,
    }
}
