//! Local JSON-over-HTTP service for interactive relaxation sessions.
//!
//! A session walks the activity threshold down from 1.0, then the code
//! threshold, then calibrates cut-offs on the holdout. The expert accepts
//! or stops at every step; nothing changes the accepted sets except an
//! explicit accept.

use std::collections::HashMap;
use std::net::SocketAddr;
use std::path::{Component, Path, PathBuf};
use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::{Arc, Mutex, TryLockError};

use axum::extract::{Path as UrlPath, Query, State};
use axum::http::{header, StatusCode, Uri};
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use cohortdef_core::groupdef::{definition_from_ids, extend_pattern};
use cohortdef_core::{
    calibrate, draw_sample, score_population, select_dbcs, ActivityId, Calibrated,
    CodeId, EventLog, GroupDefinition, Method, PatientProjection, PatientScore, RelaxSchedule,
    RelaxationStep, SamplePlan,
};
use serde::{Deserialize, Serialize};

use crate::error::{Category, Error};
use crate::io::Manifest;

/// A log the service can open sessions on, with its known groups.
#[derive(Debug)]
pub struct LoadedLog {
    pub log: EventLog,
    pub manifests: Vec<Manifest>,
}

pub struct AppState {
    logs: HashMap<String, Arc<LoadedLog>>,
    sessions: Mutex<HashMap<String, Arc<Mutex<Session>>>>,
    next_id: AtomicU64,
    ui_dir: Option<PathBuf>,
}

impl AppState {
    pub fn new(logs: HashMap<String, LoadedLog>, ui_dir: Option<PathBuf>) -> Self {
        AppState {
            logs: logs.into_iter().map(|(k, v)| (k, Arc::new(v))).collect(),
            sessions: Mutex::new(HashMap::new()),
            next_id: AtomicU64::new(1),
            ui_dir,
        }
    }

    fn session(&self, id: &str) -> Result<Arc<Mutex<Session>>, ApiError> {
        self.sessions
            .lock()
            .unwrap_or_else(|e| e.into_inner())
            .get(id)
            .cloned()
            .ok_or_else(|| ApiError::not_found(format!("unknown session `{id}`")))
    }
}

#[derive(Debug)]
pub struct ApiError {
    status: StatusCode,
    category: &'static str,
    message: String,
}

impl ApiError {
    fn new(status: StatusCode, category: &'static str, message: impl Into<String>) -> Self {
        ApiError {
            status,
            category,
            message: message.into(),
        }
    }

    fn conflict(message: impl Into<String>) -> Self {
        Self::new(StatusCode::CONFLICT, "conflict", message)
    }

    fn not_found(message: impl Into<String>) -> Self {
        Self::new(StatusCode::NOT_FOUND, Category::NotFound.as_str(), message)
    }

    fn input(message: impl Into<String>) -> Self {
        Self::new(StatusCode::BAD_REQUEST, Category::Input.as_str(), message)
    }
}

impl From<Error> for ApiError {
    fn from(e: Error) -> Self {
        let category = e.category();
        let status = match category {
            Category::Input => StatusCode::BAD_REQUEST,
            Category::EmptyPattern => StatusCode::UNPROCESSABLE_ENTITY,
            Category::NotFound => StatusCode::NOT_FOUND,
            Category::CalibrationDegenerate => StatusCode::CONFLICT,
            Category::Internal => StatusCode::INTERNAL_SERVER_ERROR,
        };
        ApiError::new(status, category.as_str(), e.to_string())
    }
}

impl From<cohortdef_core::Error> for ApiError {
    fn from(e: cohortdef_core::Error) -> Self {
        Error::from(e).into()
    }
}

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        let body = serde_json::json!({
            "error": { "category": self.category, "message": self.message }
        });
        (self.status, Json(body)).into_response()
    }
}

type ApiResult<T> = Result<T, ApiError>;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Phase {
    RelaxActivities,
    RelaxDbcs,
    Calibrate,
    Done,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Decision {
    Accept,
    Stop,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HistoryEntry {
    pub phase: Phase,
    pub threshold: f64,
    pub decision: Decision,
}

/// Server-side state of one expert session.
pub struct Session {
    id: String,
    log_id: String,
    loaded: Arc<LoadedLog>,
    plan: SamplePlan,
    train: Vec<PatientProjection>,
    schedule: RelaxSchedule,
    method: Method,
    phase: Phase,
    index: usize,
    proposal_a: Option<RelaxationStep<ActivityId>>,
    proposal_d: Option<RelaxationStep<CodeId>>,
    pattern: Vec<ActivityId>,
    dbcs: Vec<CodeId>,
    phi_a: Option<f64>,
    phi_d: Option<f64>,
    history: Vec<HistoryEntry>,
    base: Option<GroupDefinition>,
    calibrated: Option<Calibrated>,
    scores: Vec<PatientScore>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SessionView {
    pub id: String,
    pub log: String,
    pub phase: Phase,
    /// Threshold of the pending proposal; absent once the schedule is
    /// exhausted or the phase has no proposals.
    pub threshold: Option<f64>,
    pub step: f64,
    pub floor: f64,
    pub train: Vec<String>,
    pub holdout: Vec<String>,
    pub seed: u64,
    pub accepted_pattern: Vec<String>,
    pub accepted_dbcs: Vec<String>,
    pub phi_a: Option<f64>,
    pub phi_d: Option<f64>,
    pub proposal: Option<RelaxationStep<String>>,
    pub history: Vec<HistoryEntry>,
    pub cutoffs: Option<Cutoffs>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Cutoffs {
    pub alpha_f: u32,
    pub alpha_d: u32,
}

impl Session {
    fn log(&self) -> &EventLog {
        &self.loaded.log
    }

    fn threshold(&self) -> Option<f64> {
        self.schedule.threshold(self.index)
    }

    fn propose(&mut self) -> ApiResult<()> {
        self.proposal_a = None;
        self.proposal_d = None;
        let Some(t) = self.threshold() else {
            return Ok(());
        };
        match self.phase {
            Phase::RelaxActivities => {
                let current = extend_pattern(&self.train, t, &self.pattern)?;
                self.proposal_a = Some(step_between(t, &self.pattern, current));
            }
            Phase::RelaxDbcs => {
                let current = select_dbcs(&self.pattern, &self.train, t)?;
                self.proposal_d = Some(step_between(t, &self.dbcs, current));
            }
            Phase::Calibrate | Phase::Done => {}
        }
        Ok(())
    }

    pub fn view(&self) -> SessionView {
        let log = self.log();
        let act = |a: ActivityId| log.activity_label(a).to_string();
        let code = |d: CodeId| log.dbc_label(d).to_string();
        let proposal = match (&self.proposal_a, &self.proposal_d) {
            (Some(p), _) => Some(p.map(act)),
            (_, Some(p)) => Some(p.map(code)),
            _ => None,
        };
        SessionView {
            id: self.id.clone(),
            log: self.log_id.clone(),
            phase: self.phase,
            threshold: proposal.as_ref().map(|p| p.threshold),
            step: self.schedule.step,
            floor: self.schedule.floor,
            train: self.plan.train.clone(),
            holdout: self.plan.holdout.clone(),
            seed: self.plan.seed,
            accepted_pattern: self.pattern.iter().map(|&a| act(a)).collect(),
            accepted_dbcs: self.dbcs.iter().map(|&d| code(d)).collect(),
            phi_a: self.phi_a,
            phi_d: self.phi_d,
            proposal,
            history: self.history.clone(),
            cutoffs: self.calibrated.as_ref().map(|c| Cutoffs {
                alpha_f: c.definition.alpha_f,
                alpha_d: c.definition.alpha_d,
            }),
        }
    }

    pub fn step(&mut self, decision: Decision) -> ApiResult<()> {
        let threshold = self.threshold();
        match (self.phase, decision) {
            (Phase::Calibrate | Phase::Done, _) => {
                return Err(ApiError::conflict(format!(
                    "session is in phase {:?}; relaxation is over",
                    self.phase
                )))
            }
            (_, Decision::Accept) => {
                let Some(t) = threshold else {
                    return Err(ApiError::conflict("threshold is at the floor; stop to advance"));
                };
                if let Some(p) = self.proposal_a.take() {
                    self.pattern = p.current_selection;
                    self.phi_a = Some(t);
                }
                if let Some(p) = self.proposal_d.take() {
                    self.dbcs = p.current_selection;
                    self.phi_d = Some(t);
                }
                self.history.push(HistoryEntry {
                    phase: self.phase,
                    threshold: t,
                    decision,
                });
                self.index += 1;
            }
            (Phase::RelaxActivities, Decision::Stop) => {
                if self.pattern.is_empty() {
                    return Err(ApiError::new(
                        StatusCode::UNPROCESSABLE_ENTITY,
                        Category::EmptyPattern.as_str(),
                        "no activities accepted yet; accept at least one step before stopping",
                    ));
                }
                self.record_stop(threshold);
                self.phase = Phase::RelaxDbcs;
                self.index = 0;
            }
            (Phase::RelaxDbcs, Decision::Stop) => {
                self.record_stop(threshold);
                self.phase = Phase::Calibrate;
                self.finish_relaxation()?;
            }
        }
        self.propose()
    }

    fn record_stop(&mut self, threshold: Option<f64>) {
        let t = threshold.unwrap_or(self.schedule.floor);
        self.history.push(HistoryEntry {
            phase: self.phase,
            threshold: t,
            decision: Decision::Stop,
        });
    }

    fn finish_relaxation(&mut self) -> ApiResult<()> {
        let phi_a = self.phi_a.unwrap_or(self.schedule.start);
        let phi_d = self.phi_d.unwrap_or(self.schedule.start);
        let mut def = definition_from_ids(self.log(), &self.train, &self.pattern, &self.dbcs, phi_a, phi_d);
        def.provenance.holdout_ids = self.plan.holdout.clone();
        def.provenance.seed = Some(self.plan.seed);
        self.scores = score_population(self.log(), &def)?;
        let calibrated = calibrate(self.log(), &def, &self.plan.holdout, self.method)?;
        self.base = Some(def);
        self.calibrated = Some(calibrated);
        Ok(())
    }

    fn calibrated(&self) -> ApiResult<&Calibrated> {
        self.calibrated
            .as_ref()
            .ok_or_else(|| ApiError::conflict(format!("session is in phase {:?}; not calibrated yet", self.phase)))
    }

    pub fn set_cutoffs(&mut self, request: CutoffRequest) -> ApiResult<()> {
        let base = self.base.clone().ok_or_else(|| {
            ApiError::conflict(format!("session is in phase {:?}; not calibrated yet", self.phase))
        })?;
        let mut calibrated = self.calibrated()?.clone();
        match request {
            CutoffRequest::Manual { alpha_f, alpha_d } => {
                calibrated
                    .result
                    .choose_manual(alpha_f, alpha_d)
                    .ok_or_else(|| ApiError::input(format!("({alpha_f}, {alpha_d}) is outside the cut-off grid")))?;
                calibrated.definition = calibrated.result.apply(&base, &self.plan.holdout);
            }
            CutoffRequest::Method { method: Method::Manual } => {
                return Err(ApiError::input("pass alpha_f and alpha_d for manual cut-offs"));
            }
            CutoffRequest::Method { method } => {
                calibrated = calibrate(self.log(), &base, &self.plan.holdout, method)?;
            }
        }
        self.method = calibrated.result.method;
        self.calibrated = Some(calibrated);
        self.phase = Phase::Done;
        Ok(())
    }
}

fn step_between<T: Copy + Ord>(threshold: f64, previous: &[T], current: Vec<T>) -> RelaxationStep<T> {
    RelaxationStep {
        threshold,
        added_items: current
            .iter()
            .copied()
            .filter(|x| previous.binary_search(x).is_err())
            .collect(),
        current_selection: current,
    }
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CreateSession {
    /// Defaults to the only log when exactly one is loaded.
    pub log: Option<String>,
    /// Manifest group the sample is drawn from.
    pub group: Option<String>,
    #[serde(default = "default_sample_size")]
    pub sample_size: usize,
    #[serde(default = "default_split")]
    pub split: f64,
    #[serde(default)]
    pub seed: u64,
    #[serde(default = "default_step")]
    pub step: f64,
    pub floor: Option<f64>,
    #[serde(default = "default_method")]
    pub method: Method,
    /// Explicit sample instead of a drawn one.
    pub train: Option<Vec<String>>,
    pub holdout: Option<Vec<String>>,
}

fn default_sample_size() -> usize {
    30
}

fn default_split() -> f64 {
    0.5
}

fn default_step() -> f64 {
    0.05
}

fn default_method() -> Method {
    Method::Elbow
}

#[derive(Debug, Clone, Deserialize)]
#[serde(untagged)]
pub enum CutoffRequest {
    Manual { alpha_f: u32, alpha_d: u32 },
    Method { method: Method },
}

#[derive(Debug, Clone, Deserialize)]
pub struct StepRequest {
    pub decision: Decision,
}

impl AppState {
    pub fn create_session(&self, req: CreateSession) -> ApiResult<SessionView> {
        let log_id = match req.log {
            Some(id) => id,
            None if self.logs.len() == 1 => self.logs.keys().next().unwrap().clone(),
            None => return Err(ApiError::input("several logs are loaded; name one with `log`")),
        };
        let loaded = self
            .logs
            .get(&log_id)
            .cloned()
            .ok_or_else(|| ApiError::not_found(format!("unknown log `{log_id}`")))?;

        let plan = match (req.train, req.holdout) {
            (Some(train), Some(holdout)) => {
                let mut sample: Vec<String> = train.iter().chain(&holdout).cloned().collect();
                sample.sort_unstable();
                sample.dedup();
                let sorted = |mut v: Vec<String>| {
                    v.sort_unstable();
                    v.dedup();
                    v
                };
                SamplePlan {
                    sample,
                    train: sorted(train),
                    holdout: sorted(holdout),
                    seed: req.seed,
                }
            }
            (Some(_), None) | (None, Some(_)) => {
                return Err(ApiError::input("give both `train` and `holdout`, or neither"));
            }
            (None, None) => {
                let manifest = match &req.group {
                    Some(g) => loaded.manifests.iter().find(|m| &m.group_name == g),
                    None if loaded.manifests.len() == 1 => loaded.manifests.first(),
                    None => return Err(ApiError::input("name the `group` to sample from")),
                }
                .ok_or_else(|| ApiError::not_found("unknown group"))?;
                draw_sample(&manifest.members, req.sample_size, req.split, req.seed)?
            }
        };
        if plan.train.is_empty() || plan.holdout.is_empty() {
            return Err(ApiError::input("train and holdout must be non-empty"));
        }
        let train = loaded.log.project_many(&plan.train)?;
        if let Some(h) = plan.holdout.iter().find(|h| !loaded.log.contains_patient(h)) {
            return Err(ApiError::input(format!("unknown holdout patient `{h}`")));
        }
        let schedule = RelaxSchedule {
            step: req.step,
            floor: req.floor.unwrap_or(RelaxSchedule::default().floor),
            ..RelaxSchedule::default()
        };
        schedule.validate()?;
        if req.method == Method::Manual {
            return Err(ApiError::input("sessions start with elbow or lee_liu; set manual cut-offs later"));
        }

        let id = format!("s{:06}", self.next_id.fetch_add(1, Ordering::Relaxed));
        let mut session = Session {
            id: id.clone(),
            log_id,
            loaded,
            plan,
            train,
            schedule,
            method: req.method,
            phase: Phase::RelaxActivities,
            index: 0,
            proposal_a: None,
            proposal_d: None,
            pattern: Vec::new(),
            dbcs: Vec::new(),
            phi_a: None,
            phi_d: None,
            history: Vec::new(),
            base: None,
            calibrated: None,
            scores: Vec::new(),
        };
        session.propose()?;
        let view = session.view();
        self.sessions
            .lock()
            .unwrap_or_else(|e| e.into_inner())
            .insert(id, Arc::new(Mutex::new(session)));
        Ok(view)
    }
}

/// Runs `f` on the session, refusing instead of waiting when another request
/// holds it.
fn with_session<T>(state: &AppState, id: &str, f: impl FnOnce(&mut Session) -> ApiResult<T>) -> ApiResult<T> {
    let session = state.session(id)?;
    let mut guard = match session.try_lock() {
        Ok(g) => g,
        Err(TryLockError::WouldBlock) => {
            return Err(ApiError::conflict("another request is in progress on this session"))
        }
        Err(TryLockError::Poisoned(p)) => p.into_inner(),
    };
    f(&mut guard)
}

async fn create_session(
    State(state): State<Arc<AppState>>,
    Json(req): Json<CreateSession>,
) -> ApiResult<(StatusCode, Json<SessionView>)> {
    let view = state.create_session(req)?;
    Ok((StatusCode::CREATED, Json(view)))
}

async fn get_session(State(state): State<Arc<AppState>>, UrlPath(id): UrlPath<String>) -> ApiResult<Json<SessionView>> {
    with_session(&state, &id, |s| Ok(Json(s.view())))
}

async fn step_session(
    State(state): State<Arc<AppState>>,
    UrlPath(id): UrlPath<String>,
    Json(req): Json<StepRequest>,
) -> ApiResult<Json<SessionView>> {
    with_session(&state, &id, |s| {
        s.step(req.decision)?;
        Ok(Json(s.view()))
    })
}

async fn get_curve(State(state): State<Arc<AppState>>, UrlPath(id): UrlPath<String>) -> ApiResult<Response> {
    with_session(&state, &id, |s| Ok(Json(&s.calibrated()?.result).into_response()))
}

async fn post_cutoffs(
    State(state): State<Arc<AppState>>,
    UrlPath(id): UrlPath<String>,
    Json(req): Json<CutoffRequest>,
) -> ApiResult<Response> {
    with_session(&state, &id, |s| {
        s.set_cutoffs(req)?;
        Ok(Json(&s.calibrated()?.definition).into_response())
    })
}

async fn get_definition(State(state): State<Arc<AppState>>, UrlPath(id): UrlPath<String>) -> ApiResult<Response> {
    with_session(&state, &id, |s| Ok(Json(&s.calibrated()?.definition).into_response()))
}

#[derive(Debug, Clone, Deserialize)]
pub struct ClassificationQuery {
    pub alpha_f: Option<u32>,
    pub alpha_d: Option<u32>,
    #[serde(default)]
    pub page: usize,
    pub page_size: Option<usize>,
    pub format: Option<String>,
}

#[derive(Debug, Clone, Serialize)]
pub struct ClassificationPage {
    pub alpha_f: u32,
    pub alpha_d: u32,
    pub total: usize,
    pub page: usize,
    pub page_size: usize,
    pub pages: usize,
    pub members: Vec<PatientScore>,
}

const DEFAULT_PAGE_SIZE: usize = 50;

fn members_csv(members: &[&PatientScore]) -> String {
    let mut text = String::from("patient_id,activity_score,dbc_score\n");
    for m in members {
        text.push_str(&format!("{},{},{}\n", m.patient_id, m.activity_score, m.dbc_score));
    }
    text
}

async fn get_classification(
    State(state): State<Arc<AppState>>,
    UrlPath(id): UrlPath<String>,
    Query(q): Query<ClassificationQuery>,
) -> ApiResult<Response> {
    with_session(&state, &id, |s| {
        let def = &s.calibrated()?.definition;
        let alpha_f = q.alpha_f.unwrap_or(def.alpha_f);
        let alpha_d = q.alpha_d.unwrap_or(def.alpha_d);
        // Scores are already in patient id order.
        let members: Vec<&PatientScore> = s.scores.iter().filter(|p| p.within(alpha_f, alpha_d)).collect();
        match q.format.as_deref() {
            Some("csv") => {
                return Ok((
                    [
                        (header::CONTENT_TYPE, "text/csv; charset=utf-8"),
                        (header::CONTENT_DISPOSITION, "attachment; filename=\"group.csv\""),
                    ],
                    members_csv(&members),
                )
                    .into_response())
            }
            None | Some("json") => {}
            Some(other) => return Err(ApiError::input(format!("unknown format `{other}`"))),
        }
        let page_size = q.page_size.unwrap_or(DEFAULT_PAGE_SIZE).clamp(1, 10_000);
        let pages = members.len().div_ceil(page_size).max(1);
        let page = q.page.min(pages - 1);
        let start = page * page_size;
        let end = (start + page_size).min(members.len());
        Ok(Json(ClassificationPage {
            alpha_f,
            alpha_d,
            total: members.len(),
            page,
            page_size,
            pages,
            members: members[start..end].iter().map(|&m| m.clone()).collect(),
        })
        .into_response())
    })
}

const PLACEHOLDER: &str = "<!doctype html>
<html><head><meta charset=\"utf-8\"><title>cohortdef</title></head>
<body><h1>cohortdef</h1>
<p>No UI directory configured. The JSON API lives under <code>/sessions</code>.</p>
</body></html>
";

fn content_type(path: &Path) -> &'static str {
    match path.extension().and_then(|e| e.to_str()) {
        Some("html") => "text/html; charset=utf-8",
        Some("js" | "mjs") => "text/javascript",
        Some("css") => "text/css",
        Some("json") => "application/json",
        Some("svg") => "image/svg+xml",
        Some("png") => "image/png",
        _ => "application/octet-stream",
    }
}

async fn static_file(State(state): State<Arc<AppState>>, uri: Uri) -> Response {
    let rel = uri.path().trim_start_matches('/');
    let rel = if rel.is_empty() { "index.html" } else { rel };
    let Some(dir) = &state.ui_dir else {
        if rel == "index.html" {
            return ([(header::CONTENT_TYPE, "text/html; charset=utf-8")], PLACEHOLDER).into_response();
        }
        return ApiError::not_found("no such resource").into_response();
    };
    let rel = Path::new(rel);
    if rel.components().any(|c| !matches!(c, Component::Normal(_))) {
        return ApiError::not_found("no such resource").into_response();
    }
    let path = dir.join(rel);
    match tokio::fs::read(&path).await {
        Ok(bytes) => ([(header::CONTENT_TYPE, content_type(&path))], bytes).into_response(),
        Err(_) => ApiError::not_found("no such resource").into_response(),
    }
}

pub fn router(state: Arc<AppState>) -> Router {
    Router::new()
        .route("/sessions", post(create_session))
        .route("/sessions/{id}", get(get_session))
        .route("/sessions/{id}/step", post(step_session))
        .route("/sessions/{id}/curve", get(get_curve))
        .route("/sessions/{id}/cutoffs", post(post_cutoffs))
        .route("/sessions/{id}/definition", get(get_definition))
        .route("/sessions/{id}/classification", get(get_classification))
        .fallback(get(static_file))
        .with_state(state)
}

/// Serves until Ctrl-C.
pub async fn serve(state: Arc<AppState>, addr: SocketAddr) -> std::io::Result<()> {
    let listener = tokio::net::TcpListener::bind(addr).await?;
    eprintln!("listening on http://{}", listener.local_addr()?);
    axum::serve(listener, router(state))
        .with_graceful_shutdown(async {
            let _ = tokio::signal::ctrl_c().await;
        })
        .await
}
