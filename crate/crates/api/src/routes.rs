use axum::extract::rejection::{JsonRejection, QueryRejection};
use axum::extract::{DefaultBodyLimit, Path, Query, State};
use axum::http::{header, StatusCode};
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use fmea_core::generation::{accept_step, run_step, ContextMode, EditOp, GenerationStepResult, StepRequest};
use fmea_core::ingestion::{Document, DocumentFormat, IngestionReceipt};
use fmea_core::model::{FmeaTree, GenerationStep, NodeId, Study, StudyId};
use fmea_core::persistence::{DocumentSummary, ExportFormat};
use serde::{Deserialize, Serialize};
use serde_json::json;

use crate::error::ApiError;
use crate::state::{AppState, Staged};

pub const OPENAPI_JSON: &str = include_str!("../openapi.json");

const MAX_BODY_BYTES: usize = 16 * 1024 * 1024;

type ApiResult<T> = Result<T, ApiError>;

pub fn router(state: AppState) -> Router {
    Router::new()
        .route("/health", get(health))
        .route("/openapi.json", get(openapi))
        .route("/documents", post(upload_document).get(list_documents))
        .route("/studies", post(create_study).get(list_studies))
        .route("/studies/{id}", get(get_study))
        .route("/studies/{id}/steps/{step}/generate", post(generate))
        .route("/studies/{id}/steps/{step}/accept", post(accept))
        .route("/studies/{id}/export", get(export))
        .fallback(|| async { ApiError::not_found("no such endpoint") })
        .method_not_allowed_fallback(|| async {
            let body = ApiError::validation("method not allowed on this endpoint");
            (StatusCode::METHOD_NOT_ALLOWED, Json(body))
        })
        .layer(DefaultBodyLimit::max(MAX_BODY_BYTES))
        .with_state(state)
}

/// Runs synchronous core work off the async executor.
async fn blocking<T: Send + 'static>(f: impl FnOnce() -> ApiResult<T> + Send + 'static) -> ApiResult<T> {
    tokio::task::spawn_blocking(f).await.map_err(|e| ApiError::internal(format!("worker failed: {e}")))?
}

fn body<T>(payload: Result<Json<T>, JsonRejection>) -> ApiResult<T> {
    payload.map(|Json(v)| v).map_err(|e| ApiError::validation(e.body_text()))
}

fn parse_step(raw: &str) -> ApiResult<GenerationStep> {
    raw.parse().map_err(|_| ApiError::not_found(format!("unknown step `{raw}`")))
}

async fn health(State(state): State<AppState>) -> ApiResult<Json<serde_json::Value>> {
    let (documents, studies) = blocking({
        let db = state.inner.db.clone();
        move || Ok((db.list_documents()?.len(), db.list_studies()?.len()))
    })
    .await?;
    Ok(Json(json!({
        "status": "ok",
        "text_service": state.inner.text_label,
        "embedding": state.inner.embedding_label,
        "documents": documents,
        "studies": studies,
        "index_entries": state.inner.store.len(),
    })))
}

async fn openapi() -> impl IntoResponse {
    ([(header::CONTENT_TYPE, "application/json")], OPENAPI_JSON)
}

// documents

#[derive(Debug, Deserialize)]
pub struct UploadDocument {
    pub title: String,
    #[serde(default = "default_format")]
    pub format: String,
    pub content: String,
}

fn default_format() -> String {
    DocumentFormat::Markdown.as_str().to_string()
}

async fn upload_document(
    State(state): State<AppState>,
    payload: Result<Json<UploadDocument>, JsonRejection>,
) -> ApiResult<(StatusCode, Json<IngestionReceipt>)> {
    let req = body(payload)?;
    let format: DocumentFormat = req.format.parse().map_err(ApiError::validation)?;
    if req.title.trim().is_empty() {
        return Err(ApiError::validation("title must not be empty"));
    }
    let doc = Document::new(req.title.trim(), req.content, format)?;
    let receipt = blocking(move || {
        let inner = &state.inner;
        let _guard = inner.ingest_lock.lock().unwrap_or_else(|p| p.into_inner());
        let out = inner.ingestor.ingest(&doc, &inner.store)?;
        inner.db.save_document(&out.processed)?;
        if let Some(path) = &inner.store_path {
            inner.store.save(path)?;
        }
        if out.receipt.degraded {
            tracing::warn!(document = %doc.document_id, "ingested with rule-based fallback");
        }
        Ok(out.receipt)
    })
    .await?;
    Ok((StatusCode::CREATED, Json(receipt)))
}

async fn list_documents(State(state): State<AppState>) -> ApiResult<Json<Vec<DocumentSummary>>> {
    let db = state.inner.db.clone();
    Ok(Json(blocking(move || Ok(db.list_documents()?)).await?))
}

// studies

#[derive(Debug, Deserialize)]
pub struct CreateStudy {
    pub asset_name: String,
    #[serde(default)]
    pub asset_description: String,
    #[serde(default)]
    pub document_ids: Vec<fmea_core::ingestion::DocumentId>,
}

/// A study with its committed tree.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StudyView {
    pub study: Study,
    pub tree: FmeaTree,
}

async fn create_study(
    State(state): State<AppState>,
    payload: Result<Json<CreateStudy>, JsonRejection>,
) -> ApiResult<(StatusCode, Json<Study>)> {
    let req = body(payload)?;
    let study = Study::new(req.asset_name, req.asset_description, req.document_ids)?;
    let db = state.inner.db.clone();
    let study = blocking(move || {
        db.save_study(&study)?;
        Ok(study)
    })
    .await?;
    Ok((StatusCode::CREATED, Json(study)))
}

async fn list_studies(State(state): State<AppState>) -> ApiResult<Json<Vec<Study>>> {
    let db = state.inner.db.clone();
    Ok(Json(blocking(move || Ok(db.list_studies()?)).await?))
}

async fn get_study(State(state): State<AppState>, Path(id): Path<String>) -> ApiResult<Json<StudyView>> {
    let db = state.inner.db.clone();
    let id = StudyId::new(id);
    Ok(Json(blocking(move || Ok(StudyView { study: db.load_study(&id)?, tree: db.load_tree(&id)? })).await?))
}

// generation

#[derive(Debug, Default, Deserialize)]
pub struct GenerateRequest {
    /// `zero-shot`, `top-k` (with `k`), `long`, or the `chunks:<k>` form.
    #[serde(default)]
    pub mode: Option<String>,
    #[serde(default)]
    pub k: Option<usize>,
    #[serde(default)]
    pub parent_node_id: Option<NodeId>,
}

impl GenerateRequest {
    fn context_mode(&self) -> ApiResult<ContextMode> {
        if self.k == Some(0) {
            return Err(ApiError::validation("k must be at least 1"));
        }
        let k = self.k.unwrap_or(ContextMode::DEFAULT_K);
        match self.mode.as_deref().map(|m| m.trim().to_ascii_lowercase()) {
            None => Ok(ContextMode::TopK(k)),
            Some(m) if matches!(m.as_str(), "top-k" | "topk" | "top_k" | "chunks" | "rag") => Ok(ContextMode::TopK(k)),
            Some(m) => m.parse().map_err(|e: fmea_core::generation::prompt::UnknownContextMode| ApiError::validation(e.to_string())),
        }
    }
}

/// A staged result plus the token that commits it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StagedResult {
    pub result_ref: String,
    #[serde(flatten)]
    pub result: GenerationStepResult,
    pub context_mode: ContextMode,
}

async fn generate(
    State(state): State<AppState>,
    Path((id, step)): Path<(String, String)>,
    payload: Result<Json<GenerateRequest>, JsonRejection>,
) -> ApiResult<Json<StagedResult>> {
    let step = parse_step(&step)?;
    // an empty body means all defaults
    let req = match payload {
        Err(JsonRejection::MissingJsonContentType(_)) => GenerateRequest::default(),
        other => body(other)?,
    };
    let mode = req.context_mode()?;
    let study_id = StudyId::new(id);
    let lock = state.study_lock(&study_id);
    let _held = lock.lock().await;

    let result = blocking({
        let state = state.clone();
        let study_id = study_id.clone();
        move || {
            let inner = &state.inner;
            let study = inner.db.load_study(&study_id)?;
            let tree = inner.db.load_tree(&study_id)?;
            let request = StepRequest { step, parent_node_id: req.parent_node_id, mode };
            Ok(run_step(&study, &tree, &request, &inner.generation)?)
        }
    })
    .await?;

    let staged = Staged { token: uuid::Uuid::new_v4().simple().to_string(), result, mode };
    state.inner.staged.lock().unwrap().insert((study_id, step), staged.clone());
    Ok(Json(StagedResult { result_ref: staged.token, result: staged.result, context_mode: mode }))
}

#[derive(Debug, Deserialize)]
pub struct AcceptRequest {
    pub result_ref: String,
    #[serde(default)]
    pub edits: Vec<EditOp>,
    /// Whether this accept finishes the current level. Defaults to true; set
    /// false to keep generating siblings for other parents first.
    #[serde(default = "yes")]
    pub mark_complete: bool,
}

fn yes() -> bool {
    true
}

async fn accept(
    State(state): State<AppState>,
    Path((id, step)): Path<(String, String)>,
    payload: Result<Json<AcceptRequest>, JsonRejection>,
) -> ApiResult<Json<FmeaTree>> {
    let step = parse_step(&step)?;
    let req = body(payload)?;
    let study_id = StudyId::new(id);
    let lock = state.study_lock(&study_id);
    let _held = lock.lock().await;

    let key = (study_id.clone(), step);
    let staged = match state.inner.staged.lock().unwrap().get(&key) {
        Some(s) if s.token == req.result_ref => s.clone(),
        _ => {
            return Err(ApiError::not_found(format!("no staged result `{}` for this study and step", req.result_ref)))
        }
    };

    let tree = blocking({
        let state = state.clone();
        move || {
            let db = &state.inner.db;
            let mut study = db.load_study(&study_id)?;
            let tree = db.load_tree(&study_id)?;
            let tree = accept_step(&mut study, &tree, &staged.result, &req.edits, req.mark_complete)?;
            db.save_study_and_tree(&study, &tree)?;
            Ok(tree)
        }
    })
    .await?;
    // single use: only a successful commit consumes the token
    state.inner.staged.lock().unwrap().remove(&key);
    Ok(Json(tree))
}

// export

#[derive(Debug, Deserialize)]
pub struct ExportQuery {
    #[serde(default)]
    pub format: Option<String>,
}

async fn export(
    State(state): State<AppState>,
    Path(id): Path<String>,
    query: Result<Query<ExportQuery>, QueryRejection>,
) -> ApiResult<Response> {
    let Query(query) = query.map_err(|e| ApiError::validation(e.body_text()))?;
    let format: ExportFormat = match query.format.as_deref() {
        None => ExportFormat::Json,
        Some(f) => f.parse().map_err(|_| ApiError::validation(format!("unknown export format `{f}` (csv or json)")))?,
    };
    let db = state.inner.db.clone();
    let study_id = StudyId::new(id);
    let bytes = blocking({
        let study_id = study_id.clone();
        move || Ok(db.export_fmea(&study_id, format)?)
    })
    .await?;
    let disposition = format!("attachment; filename=\"fmea-{study_id}.{}\"", format.extension());
    Ok(([(header::CONTENT_TYPE, format.content_type().to_string()), (header::CONTENT_DISPOSITION, disposition)], bytes)
        .into_response())
}
