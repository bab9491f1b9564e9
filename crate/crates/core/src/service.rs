//! HTTP control plane over training runs.
//!
//! [`Service`] holds the operations; [`router`] maps them onto routes. Runs
//! execute on their own threads, and the service only ever reads their
//! published snapshots or sends them [`Command`]s.

use std::collections::{BTreeMap, HashMap, HashSet};
use std::fs;
use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::mpsc::{self, Sender};
use std::sync::{Arc, Mutex, RwLock};
use std::thread::JoinHandle;
use std::time::{Duration, Instant};

use axum::extract::{Path as UrlPath, State as AxState};
use axum::http::{header, HeaderMap, StatusCode};
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use log::{error, info};
use serde::{Deserialize, Serialize};
use serde_json::json;
use thiserror::Error;

use crate::envs::EnvSpec;
use crate::model::{FieldError, Preference, RunConfig, Segment};
use crate::pbrl::{
    curve_csv, load_run_dir, Command, CurvePoint, Phase, Run, RunOptions, RunSnapshot, RunState, SharedSnapshot,
    TicketStatus,
};

#[derive(Debug, Error)]
pub enum ServiceError {
    #[error("unknown run {0}")]
    UnknownRun(u64),
    #[error("unknown query {0}")]
    UnknownQuery(u64),
    #[error("unknown segment {0}")]
    UnknownSegment(u64),
    #[error("unknown ticket {0}")]
    UnknownTicket(u64),
    #[error("query {0} is already labeled")]
    AlreadyLabeled(u64),
    #[error("invalid request")]
    Validation(Vec<FieldError>),
    #[error("{0}")]
    Conflict(String),
    #[error("internal error: {0}")]
    Internal(String),
}

impl ServiceError {
    fn field(field: &str, message: impl Into<String>) -> Self {
        ServiceError::Validation(vec![FieldError {
            field: field.into(),
            message: message.into(),
        }])
    }

    pub fn status(&self) -> StatusCode {
        match self {
            ServiceError::UnknownRun(_)
            | ServiceError::UnknownQuery(_)
            | ServiceError::UnknownSegment(_)
            | ServiceError::UnknownTicket(_) => StatusCode::NOT_FOUND,
            ServiceError::AlreadyLabeled(_) | ServiceError::Conflict(_) => StatusCode::CONFLICT,
            ServiceError::Validation(_) => StatusCode::UNPROCESSABLE_ENTITY,
            ServiceError::Internal(_) => StatusCode::INTERNAL_SERVER_ERROR,
        }
    }
}

impl IntoResponse for ServiceError {
    fn into_response(self) -> Response {
        let body = match &self {
            ServiceError::Validation(fields) => json!({"error": self.to_string(), "fields": fields}),
            _ => json!({"error": self.to_string()}),
        };
        (self.status(), Json(body)).into_response()
    }
}

/// One segment laid out for drawing on the grid.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrajectoryView {
    pub segment_id: u64,
    pub env_id: String,
    pub grid: [usize; 2],
    pub start: [usize; 2],
    pub goal: [usize; 2],
    pub cells: Vec<[usize; 2]>,
    pub actions: Vec<usize>,
    pub feature_names: Vec<String>,
    pub features: Vec<Vec<f64>>,
}

impl TrajectoryView {
    pub fn of(seg: &Segment) -> Option<Self> {
        let env = EnvSpec::by_name(&seg.env_id)?;
        Some(Self {
            segment_id: seg.segment_id,
            env_id: seg.env_id.clone(),
            grid: [env.grid_width, env.grid_height],
            start: [env.start.0, env.start.1],
            goal: [env.goal.0, env.goal.1],
            cells: seg
                .states()
                .map(|s| {
                    let (x, y) = env.cell_of(s);
                    [x, y]
                })
                .collect(),
            actions: seg.steps.iter().map(|(_, a)| a.action_id).collect(),
            feature_names: env.feature_schema.clone(),
            features: seg.states().map(|s| s.features.clone()).collect(),
        })
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PendingQueryView {
    pub query_id: u64,
    pub created_at: u64,
    pub left: TrajectoryView,
    pub right: TrajectoryView,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunStatus {
    pub run_id: u64,
    pub phase: Phase,
    pub env_steps: u64,
    pub total_env_steps: u64,
    pub queries_used: usize,
    pub query_budget: usize,
    pub functions_version: u64,
    pub reward_updates: u64,
    pub pending_queries: usize,
    pub curve_samples: usize,
    pub warnings: Vec<String>,
    pub error: Option<String>,
    /// False for runs reloaded from disk.
    pub live: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Ticket {
    pub run_id: u64,
    pub ticket: u64,
    #[serde(flatten)]
    pub status: TicketStatus,
}

/// A run known to the service.
pub struct RunHandle {
    pub run_id: u64,
    pub cfg: RunConfig,
    pub run_dir: Option<PathBuf>,
    snapshot: SharedSnapshot,
    commands: Mutex<Option<Sender<Command>>>,
    /// Queries whose answer has been sent but maybe not yet applied.
    claimed: Mutex<HashSet<u64>>,
    /// Tickets sent to the loop that it has not reported on yet.
    queued: Mutex<BTreeMap<u64, TicketStatus>>,
    next_ticket: AtomicU64,
    thread: Mutex<Option<JoinHandle<()>>>,
}

impl RunHandle {
    fn snapshot(&self) -> RunSnapshot {
        self.snapshot.read().map(|s| s.clone()).unwrap_or_default()
    }

    fn send(&self, cmd: Command) -> Result<(), ServiceError> {
        let guard = self.commands.lock().map_err(|_| ServiceError::Internal("command lock".into()))?;
        match guard.as_ref() {
            Some(tx) => tx
                .send(cmd)
                .map_err(|_| ServiceError::Conflict(format!("run {} has finished", self.run_id))),
            None => Err(ServiceError::Conflict(format!("run {} is not live", self.run_id))),
        }
    }
}

/// All runs of one server process.
pub struct Service {
    runs: RwLock<HashMap<u64, Arc<RunHandle>>>,
    next_id: AtomicU64,
    data_dir: Option<PathBuf>,
}

impl Default for Service {
    fn default() -> Self {
        Self::new(None)
    }
}

impl Service {
    /// A service keeping run directories under `data_dir`, if given.
    pub fn new(data_dir: Option<PathBuf>) -> Self {
        Self {
            runs: RwLock::new(HashMap::new()),
            next_id: AtomicU64::new(1),
            data_dir,
        }
    }

    /// Like [`Service::new`], also reloading finished runs found in
    /// `data_dir` as read-only entries.
    pub fn with_reload(data_dir: PathBuf) -> std::io::Result<Self> {
        fs::create_dir_all(&data_dir)?;
        let svc = Self::new(Some(data_dir.clone()));
        let mut max_id = 0;
        for entry in fs::read_dir(&data_dir)? {
            let path = entry?.path();
            let Some(id) = path
                .file_name()
                .and_then(|n| n.to_str())
                .and_then(|n| n.strip_prefix("run-"))
                .and_then(|n| n.parse::<u64>().ok())
            else {
                continue;
            };
            max_id = max_id.max(id);
            match load_run_dir(&path) {
                Ok((cfg, state)) => {
                    svc.insert(id, cfg, Some(path), RunSnapshot { state, ..Default::default() }, None);
                    info!("reloaded finished run {id}");
                }
                Err(e) => info!("skipping {}: {e}", path.display()),
            }
        }
        svc.next_id.store(max_id + 1, Ordering::SeqCst);
        Ok(svc)
    }

    fn insert(
        &self,
        id: u64,
        cfg: RunConfig,
        run_dir: Option<PathBuf>,
        snap: RunSnapshot,
        tx: Option<Sender<Command>>,
    ) -> Arc<RunHandle> {
        let handle = Arc::new(RunHandle {
            run_id: id,
            cfg,
            run_dir,
            snapshot: Arc::new(RwLock::new(snap)),
            commands: Mutex::new(tx),
            claimed: Mutex::new(HashSet::new()),
            queued: Mutex::new(BTreeMap::new()),
            next_ticket: AtomicU64::new(1),
            thread: Mutex::new(None),
        });
        if let Ok(mut runs) = self.runs.write() {
            runs.insert(id, handle.clone());
        }
        handle
    }

    fn handle(&self, id: u64) -> Result<Arc<RunHandle>, ServiceError> {
        self.runs
            .read()
            .ok()
            .and_then(|r| r.get(&id).cloned())
            .ok_or(ServiceError::UnknownRun(id))
    }

    pub fn run_ids(&self) -> Vec<u64> {
        let mut ids: Vec<u64> = self.runs.read().map(|r| r.keys().copied().collect()).unwrap_or_default();
        ids.sort_unstable();
        ids
    }

    /// Validates `cfg` and starts the run on its own thread.
    pub fn start_run(&self, cfg: RunConfig) -> Result<u64, ServiceError> {
        cfg.validate().map_err(|e| ServiceError::Validation(e.0))?;
        for (i, ep) in cfg.llm_endpoints.iter().enumerate() {
            let problems: Vec<FieldError> = ep
                .problems()
                .into_iter()
                .map(|(f, m)| FieldError {
                    field: format!("llm_endpoints[{i}].{f}"),
                    message: m,
                })
                .collect();
            if !problems.is_empty() {
                return Err(ServiceError::Validation(problems));
            }
        }
        let id = self.next_id.fetch_add(1, Ordering::SeqCst);
        let run_dir = self.data_dir.as_ref().map(|d| d.join(format!("run-{id}")));
        let (tx, rx) = mpsc::channel();
        let handle = self.insert(id, cfg.clone(), run_dir.clone(), RunSnapshot::default(), Some(tx));
        let opts = RunOptions {
            run_dir,
            commands: Some(rx),
            snapshot: Some(handle.snapshot.clone()),
            gateway: None,
        };
        let snapshot = handle.snapshot.clone();
        let thread = std::thread::Builder::new()
            .name(format!("run-{id}"))
            .spawn(move || {
                let result = Run::new(&cfg, opts).and_then(|mut run| run.run_to_end());
                if let Err(e) = result {
                    error!("run {id} failed: {e}");
                    if let Ok(mut s) = snapshot.write() {
                        s.state.phase = Phase::Done;
                        s.state.error.get_or_insert_with(|| e.to_string());
                    }
                }
            })
            .map_err(|e| ServiceError::Internal(e.to_string()))?;
        if let Ok(mut t) = handle.thread.lock() {
            *t = Some(thread);
        }
        info!("started run {id}");
        Ok(id)
    }

    pub fn status(&self, id: u64) -> Result<RunStatus, ServiceError> {
        let h = self.handle(id)?;
        let snap = h.snapshot();
        let claimed = h.claimed.lock().map(|c| c.clone()).unwrap_or_default();
        let live = h.commands.lock().map(|c| c.is_some()).unwrap_or(false);
        Ok(RunStatus {
            run_id: id,
            phase: snap.state.phase,
            env_steps: snap.state.env_steps,
            total_env_steps: h.cfg.total_env_steps,
            queries_used: snap.state.queries_used,
            query_budget: h.cfg.query_budget,
            functions_version: snap.state.functions_version,
            reward_updates: snap.state.reward_updates,
            pending_queries: snap.pending.iter().filter(|p| !claimed.contains(&p.query_id)).count(),
            curve_samples: snap.state.curve.len(),
            warnings: snap.state.warnings,
            error: snap.state.error,
            live,
        })
    }

    pub fn state(&self, id: u64) -> Result<RunState, ServiceError> {
        Ok(self.handle(id)?.snapshot().state)
    }

    /// Unanswered human queries, oldest first.
    pub fn pending(&self, id: u64) -> Result<Vec<PendingQueryView>, ServiceError> {
        let h = self.handle(id)?;
        let snap = h.snapshot();
        let claimed = h.claimed.lock().map(|c| c.clone()).unwrap_or_default();
        Ok(snap
            .pending
            .iter()
            .filter(|p| !claimed.contains(&p.query_id))
            .filter_map(|p| {
                Some(PendingQueryView {
                    query_id: p.query_id,
                    created_at: p.created_at,
                    left: TrajectoryView::of(&p.seg0)?,
                    right: TrajectoryView::of(&p.seg1)?,
                })
            })
            .collect())
    }

    /// Queues a human answer; the loop applies it at its next boundary.
    pub fn post_preference(&self, id: u64, query_id: u64, value: f64) -> Result<(), ServiceError> {
        let h = self.handle(id)?;
        let pref = Preference::from_value(value).map_err(|e| ServiceError::field("value", e.to_string()))?;
        let snap = h.snapshot();
        let mut claimed = h.claimed.lock().map_err(|_| ServiceError::Internal("claim lock".into()))?;
        if claimed.contains(&query_id) {
            return Err(ServiceError::AlreadyLabeled(query_id));
        }
        if !snap.pending.iter().any(|p| p.query_id == query_id) {
            return Err(ServiceError::UnknownQuery(query_id));
        }
        h.send(Command::Label { query_id, value: pref })?;
        claimed.insert(query_id);
        Ok(())
    }

    /// Queues a refinement round and returns its ticket.
    pub fn post_feedback(&self, id: u64, text: &str) -> Result<Ticket, ServiceError> {
        let h = self.handle(id)?;
        if text.trim().is_empty() {
            return Err(ServiceError::field("text", "feedback text is empty"));
        }
        if !h.cfg.teacher_kind.is_crowd() {
            return Err(ServiceError::Conflict("run has no crowd of evaluation programs to refine".into()));
        }
        let phase = h.snapshot().state.phase;
        if !matches!(phase, Phase::Training | Phase::Refining) {
            return Err(ServiceError::Conflict(format!("run is in phase {phase:?}, not training")));
        }
        let ticket = h.next_ticket.fetch_add(1, Ordering::SeqCst);
        h.queued
            .lock()
            .map_err(|_| ServiceError::Internal("ticket lock".into()))?
            .insert(ticket, TicketStatus::Queued);
        h.send(Command::Refine {
            ticket,
            feedback: text.to_string(),
        })?;
        Ok(Ticket {
            run_id: id,
            ticket,
            status: TicketStatus::Queued,
        })
    }

    pub fn ticket(&self, id: u64, ticket: u64) -> Result<Ticket, ServiceError> {
        let h = self.handle(id)?;
        let status = match h.snapshot().tickets.get(&ticket) {
            Some(s) => s.clone(),
            None => h
                .queued
                .lock()
                .ok()
                .and_then(|q| q.get(&ticket).cloned())
                .ok_or(ServiceError::UnknownTicket(ticket))?,
        };
        Ok(Ticket {
            run_id: id,
            ticket,
            status,
        })
    }

    pub fn curve(&self, id: u64) -> Result<Vec<CurvePoint>, ServiceError> {
        Ok(self.handle(id)?.snapshot().state.curve)
    }

    pub fn trajectory(&self, id: u64, segment_id: u64) -> Result<TrajectoryView, ServiceError> {
        let h = self.handle(id)?;
        let snap = h.snapshot();
        snap.segments
            .get(&segment_id)
            .and_then(TrajectoryView::of)
            .ok_or(ServiceError::UnknownSegment(segment_id))
    }

    /// Commands the loop has processed, in order.
    pub fn command_log(&self, id: u64) -> Result<Vec<String>, ServiceError> {
        Ok(self.handle(id)?.snapshot().command_log)
    }

    /// Blocks until the run is done or `timeout` passes.
    pub fn wait(&self, id: u64, timeout: Duration) -> Result<RunStatus, ServiceError> {
        let deadline = Instant::now() + timeout;
        loop {
            let s = self.status(id)?;
            if s.phase == Phase::Done || Instant::now() >= deadline {
                return Ok(s);
            }
            std::thread::sleep(Duration::from_millis(10));
        }
    }

    /// Asks a live run to stop early.
    pub fn stop(&self, id: u64) -> Result<(), ServiceError> {
        self.handle(id)?.send(Command::Stop)
    }

    pub fn run_dir(&self, id: u64) -> Result<Option<PathBuf>, ServiceError> {
        Ok(self.handle(id)?.run_dir.clone())
    }
}

#[derive(Deserialize)]
struct PreferenceBody {
    value: serde_json::Value,
}

#[derive(Deserialize)]
struct FeedbackBody {
    text: String,
}

type Shared = Arc<Service>;

fn wants_csv(headers: &HeaderMap) -> bool {
    headers
        .get(header::ACCEPT)
        .and_then(|v| v.to_str().ok())
        .is_some_and(|a| a.contains("text/csv"))
}

async fn h_start(AxState(svc): AxState<Shared>, body: String) -> Result<Response, ServiceError> {
    let cfg: RunConfig = serde_json::from_str(&body).map_err(|e| ServiceError::field("body", e.to_string()))?;
    let id = svc.start_run(cfg)?;
    Ok((StatusCode::CREATED, Json(json!({ "run_id": id }))).into_response())
}

async fn h_list(AxState(svc): AxState<Shared>) -> Json<Vec<u64>> {
    Json(svc.run_ids())
}

async fn h_status(AxState(svc): AxState<Shared>, UrlPath(id): UrlPath<u64>) -> Result<Json<RunStatus>, ServiceError> {
    svc.status(id).map(Json)
}

async fn h_pending(
    AxState(svc): AxState<Shared>,
    UrlPath(id): UrlPath<u64>,
) -> Result<Json<Vec<PendingQueryView>>, ServiceError> {
    svc.pending(id).map(Json)
}

async fn h_preference(
    AxState(svc): AxState<Shared>,
    UrlPath((id, qid)): UrlPath<(u64, u64)>,
    body: String,
) -> Result<Json<serde_json::Value>, ServiceError> {
    let body: PreferenceBody = serde_json::from_str(&body).map_err(|e| ServiceError::field("value", e.to_string()))?;
    let value = body
        .value
        .as_f64()
        .ok_or_else(|| ServiceError::field("value", "must be a number in {0, 0.5, 1}"))?;
    svc.post_preference(id, qid, value)?;
    Ok(Json(json!({ "run_id": id, "query_id": qid, "accepted": true })))
}

async fn h_feedback(
    AxState(svc): AxState<Shared>,
    UrlPath(id): UrlPath<u64>,
    body: String,
) -> Result<Response, ServiceError> {
    let body: FeedbackBody = serde_json::from_str(&body).map_err(|e| ServiceError::field("text", e.to_string()))?;
    let ticket = svc.post_feedback(id, &body.text)?;
    Ok((StatusCode::ACCEPTED, Json(ticket)).into_response())
}

async fn h_ticket(
    AxState(svc): AxState<Shared>,
    UrlPath((id, t)): UrlPath<(u64, u64)>,
) -> Result<Json<Ticket>, ServiceError> {
    svc.ticket(id, t).map(Json)
}

async fn h_curve(
    AxState(svc): AxState<Shared>,
    UrlPath(id): UrlPath<u64>,
    headers: HeaderMap,
) -> Result<Response, ServiceError> {
    let points = svc.curve(id)?;
    if wants_csv(&headers) {
        Ok(([(header::CONTENT_TYPE, "text/csv")], curve_csv(&points)).into_response())
    } else {
        Ok(Json(points).into_response())
    }
}

async fn h_trajectory(
    AxState(svc): AxState<Shared>,
    UrlPath((id, sid)): UrlPath<(u64, u64)>,
) -> Result<Json<TrajectoryView>, ServiceError> {
    svc.trajectory(id, sid).map(Json)
}

pub fn router(svc: Shared) -> Router {
    Router::new()
        .route("/runs", post(h_start).get(h_list))
        .route("/runs/{id}/status", get(h_status))
        .route("/runs/{id}/queries/pending", get(h_pending))
        .route("/runs/{id}/queries/{qid}/preference", post(h_preference))
        .route("/runs/{id}/feedback", post(h_feedback))
        .route("/runs/{id}/feedback/{ticket}", get(h_ticket))
        .route("/runs/{id}/curve", get(h_curve))
        .route("/runs/{id}/trajectories/{sid}", get(h_trajectory))
        .with_state(svc)
}

/// Serves until the process is killed.
pub async fn serve(addr: &str, data_dir: Option<&Path>) -> anyhow::Result<()> {
    let svc = match data_dir {
        Some(d) => Service::with_reload(d.to_path_buf())?,
        None => Service::new(None),
    };
    let listener = tokio::net::TcpListener::bind(addr).await?;
    info!("listening on {}", listener.local_addr()?);
    axum::serve(listener, router(Arc::new(svc))).await?;
    Ok(())
}
