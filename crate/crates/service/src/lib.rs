//! Submission gate: checks draft reports for duplicates before they are filed
//! and registers accepted ones in the recent cache.
//!
//! HTTP interface (all bodies JSON, errors as `{"error": "..."}`):
//!
//! - `POST /v1/check`  `{report, k?}` → `{verdict, candidates, degraded}`
//! - `POST /v1/submit` `{report, force?}` → `{accepted: true, id}` or `{accepted: false, candidates}`
//! - `GET  /v1/health` → `{status, index_size, cache_size}`
//!
//! Checks share a read lock; submits take the write lock for the whole
//! check-then-register step, so a check never sees half a submit.

use std::net::SocketAddr;
use std::path::Path;
use std::sync::{Arc, RwLock};

use axum::body::Bytes;
use axum::extract::State;
use axum::http::StatusCode;
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use serde::{Deserialize, Serialize};

use dupscout_core::corpus::parse_draft;
use dupscout_core::pipeline::RecentReports;
use dupscout_core::{BugReport, Nomination, Pipeline};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Verdict {
    LikelyDuplicate,
    LikelyNew,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CheckResponse {
    pub verdict: Verdict,
    pub candidates: Vec<Nomination>,
    /// The classifier was unreachable and candidates are unfiltered.
    pub degraded: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SubmitResponse {
    pub accepted: bool,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub id: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub candidates: Option<Vec<Nomination>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Health {
    pub status: String,
    pub index_size: usize,
    pub cache_size: usize,
}

#[derive(Debug, thiserror::Error)]
pub enum GateError {
    #[error("artifacts not loaded")]
    NotLoaded,
    #[error("{0}")]
    BadRequest(String),
    #[error("{0}")]
    Internal(String),
}

impl GateError {
    pub fn status(&self) -> StatusCode {
        match self {
            GateError::NotLoaded => StatusCode::SERVICE_UNAVAILABLE,
            GateError::BadRequest(_) => StatusCode::BAD_REQUEST,
            GateError::Internal(_) => StatusCode::INTERNAL_SERVER_ERROR,
        }
    }
}

impl IntoResponse for GateError {
    fn into_response(self) -> Response {
        (self.status(), Json(serde_json::json!({ "error": self.to_string() }))).into_response()
    }
}

struct Loaded {
    pipeline: Pipeline,
    recent: RwLock<Recent>,
}

struct Recent {
    reports: RecentReports,
    next_id: u64,
}

pub struct Gate {
    loaded: Option<Loaded>,
}

const DRAFT_ID: &str = "draft";

impl Gate {
    pub fn new(pipeline: Pipeline) -> Self {
        let capacity = pipeline.config.cache_capacity;
        Self {
            loaded: Some(Loaded {
                pipeline,
                recent: RwLock::new(Recent {
                    reports: RecentReports::new(capacity),
                    next_id: 1,
                }),
            }),
        }
    }

    /// A gate that answers every request with 503.
    pub fn unloaded() -> Self {
        Self { loaded: None }
    }

    pub fn from_dir(dir: &Path) -> dupscout_core::Result<Self> {
        Ok(Self::new(Pipeline::load(dir)?.0))
    }

    fn loaded(&self) -> Result<&Loaded, GateError> {
        self.loaded.as_ref().ok_or(GateError::NotLoaded)
    }

    pub fn health(&self) -> Health {
        match &self.loaded {
            Some(l) => Health {
                status: "ok".into(),
                index_size: l.pipeline.index.len(),
                cache_size: l.recent.read().expect("cache lock poisoned").reports.len(),
            },
            None => Health {
                status: "unavailable".into(),
                index_size: 0,
                cache_size: 0,
            },
        }
    }

    pub fn handle_check(&self, report: &serde_json::Value, k: Option<usize>) -> Result<CheckResponse, GateError> {
        let loaded = self.loaded()?;
        let draft = parse_report(report)?;
        let recent = loaded.recent.read().expect("cache lock poisoned");
        check(&loaded.pipeline, &recent.reports, &draft, k)
    }

    pub fn handle_submit(&self, report: &serde_json::Value, force: bool) -> Result<SubmitResponse, GateError> {
        let loaded = self.loaded()?;
        let mut draft = parse_report(report)?;
        let mut recent = loaded.recent.write().expect("cache lock poisoned");
        let outcome = check(&loaded.pipeline, &recent.reports, &draft, None)?;
        if outcome.verdict == Verdict::LikelyDuplicate && !force {
            return Ok(SubmitResponse {
                accepted: false,
                id: None,
                candidates: Some(outcome.candidates),
            });
        }
        let taken = |id: &str, recent: &Recent| loaded.pipeline.index.contains(id) || recent.reports.contains(id);
        let provided = report.get("id").and_then(|v| v.as_str()).filter(|s| !s.is_empty());
        draft.id = match provided {
            Some(id) if !taken(id, &recent) => id.to_string(),
            _ => loop {
                let candidate = format!("sub-{}", recent.next_id);
                recent.next_id += 1;
                if !taken(&candidate, &recent) {
                    break candidate;
                }
            },
        };
        let id = draft.id.clone();
        let evicted = recent
            .reports
            .register(&loaded.pipeline, draft)
            .map_err(|e| GateError::Internal(e.to_string()))?;
        if let Some(old) = evicted {
            tracing::info!(%old, "evicted from recent cache");
        }
        Ok(SubmitResponse {
            accepted: true,
            id: Some(id),
            candidates: None,
        })
    }
}

fn parse_report(value: &serde_json::Value) -> Result<BugReport, GateError> {
    parse_draft(&value.to_string(), DRAFT_ID).map_err(|e| GateError::BadRequest(e.to_string()))
}

fn check(
    pipeline: &Pipeline,
    recent: &RecentReports,
    draft: &BugReport,
    k: Option<usize>,
) -> Result<CheckResponse, GateError> {
    let k = k.unwrap_or(pipeline.config.k);
    if k == 0 {
        return Err(GateError::BadRequest("k must be at least 1".into()));
    }
    let doc = pipeline
        .process(draft)
        .map_err(|e| GateError::BadRequest(e.to_string()))?;
    let outcome = pipeline
        .query_recent(&doc, recent, k, true)
        .map_err(|e| GateError::Internal(e.to_string()))?;
    let degraded = outcome.filtered.as_ref().is_some_and(|f| f.degraded);
    let candidates = outcome.candidates().to_vec();
    let verdict = match candidates.first() {
        Some(top) if top.similarity >= pipeline.config.verdict_threshold => Verdict::LikelyDuplicate,
        _ => Verdict::LikelyNew,
    };
    Ok(CheckResponse {
        verdict,
        candidates,
        degraded,
    })
}

#[derive(Deserialize)]
struct CheckRequest {
    report: serde_json::Value,
    #[serde(default)]
    k: Option<usize>,
}

#[derive(Deserialize)]
struct SubmitRequest {
    report: serde_json::Value,
    #[serde(default)]
    force: bool,
}

fn parse_body<T: for<'de> Deserialize<'de>>(body: &Bytes) -> Result<T, GateError> {
    serde_json::from_slice(body).map_err(|e| GateError::BadRequest(format!("malformed request: {e}")))
}

/// Runs gate work off the async executor; classification may block on the network.
async fn blocking<T, F>(gate: Arc<Gate>, work: F) -> Result<T, GateError>
where
    T: Send + 'static,
    F: FnOnce(&Gate) -> Result<T, GateError> + Send + 'static,
{
    tokio::task::spawn_blocking(move || work(&gate))
        .await
        .map_err(|e| GateError::Internal(e.to_string()))?
}

async fn check_route(State(gate): State<Arc<Gate>>, body: Bytes) -> Result<Json<CheckResponse>, GateError> {
    let req: CheckRequest = parse_body(&body)?;
    blocking(gate, move |g| g.handle_check(&req.report, req.k))
        .await
        .map(Json)
}

async fn submit_route(State(gate): State<Arc<Gate>>, body: Bytes) -> Result<Json<SubmitResponse>, GateError> {
    let req: SubmitRequest = parse_body(&body)?;
    blocking(gate, move |g| g.handle_submit(&req.report, req.force))
        .await
        .map(Json)
}

async fn health_route(State(gate): State<Arc<Gate>>) -> (StatusCode, Json<Health>) {
    let health = gate.health();
    let status = if health.status == "ok" {
        StatusCode::OK
    } else {
        StatusCode::SERVICE_UNAVAILABLE
    };
    (status, Json(health))
}

pub fn router(gate: Arc<Gate>) -> Router {
    Router::new()
        .route("/v1/check", post(check_route))
        .route("/v1/submit", post(submit_route))
        .route("/v1/health", get(health_route))
        .with_state(gate)
}

pub async fn serve(addr: SocketAddr, gate: Arc<Gate>) -> std::io::Result<()> {
    let listener = tokio::net::TcpListener::bind(addr).await?;
    tracing::info!(addr = %listener.local_addr()?, "gate listening");
    axum::serve(listener, router(gate)).await
}
