//! Request handlers. Engine work runs on the blocking pool under the
//! session's own lock, so sessions never wait on each other.

use std::collections::BTreeMap;
use std::sync::Arc;

use axum::body::Bytes;
use axum::extract::rejection::{BytesRejection, JsonRejection, QueryRejection};
use axum::extract::{Path, Query, State};
use axum::http::{header, StatusCode};
use axum::response::{IntoResponse, Response};
use axum::Json;
use serde::{Deserialize, Serialize};

use super::error::ApiError;
use super::store::{ColumnSchema, Dataset, SessionHandle};
use super::AppState;
use crate::anomaly::{AnomalyIndex, AnomalyRecord, AnomalyType, DetectorConfig};
use crate::codegen::{generate_script, ScriptArtifact};
use crate::error::Error;
use crate::groups::{GroupKey, GroupSpec};
use crate::insight::{chart_payload, ChartKind, ChartPayload, ColorMode, RankedGroup, AttributeSummary};
use crate::repair::{ActionDiff, RepairAction};
use crate::report::build_report;
use crate::session::{load_typed, Preview, Session, SessionExport};
use crate::table::{serialize_csv, CsvOptions};

type ApiResult<T> = Result<T, ApiError>;

fn json_body<T>(body: Result<Json<T>, JsonRejection>) -> ApiResult<T> {
    body.map(|Json(v)| v).map_err(|e| ApiError::bad_request(e.body_text()))
}

fn query<T>(q: Result<Query<T>, QueryRejection>) -> ApiResult<T> {
    q.map(|Query(v)| v).map_err(|e| ApiError::bad_request(e.body_text()))
}

async fn blocking<T: Send + 'static>(f: impl FnOnce() -> ApiResult<T> + Send + 'static) -> ApiResult<T> {
    tokio::task::spawn_blocking(f)
        .await
        .map_err(|e| ApiError::internal(format!("worker failed: {e}")))?
}

fn session_handle(state: &AppState, id: &str) -> ApiResult<SessionHandle> {
    state
        .store
        .session(id)?
        .ok_or_else(|| ApiError::not_found("SESSION_NOT_FOUND", format!("no session {id}")))
}

/// Runs `f` with the session locked, on the blocking pool.
async fn with_session<T: Send + 'static>(
    state: &AppState,
    id: &str,
    f: impl FnOnce(&mut Session) -> ApiResult<T> + Send + 'static,
) -> ApiResult<T> {
    let handle = session_handle(state, id)?;
    blocking(move || f(&mut handle.lock())).await
}

#[derive(Serialize)]
pub struct Health {
    pub status: &'static str,
    pub version: &'static str,
}

pub async fn health() -> Json<Health> {
    Json(Health {
        status: "ok",
        version: crate::codegen::ENGINE_VERSION,
    })
}

#[derive(Debug, Default, Deserialize)]
#[serde(default)]
pub struct UploadParams {
    pub name: Option<String>,
    pub delimiter: Option<char>,
    pub has_header: Option<bool>,
    /// Comma-separated null tokens replacing the defaults.
    pub null_tokens: Option<String>,
}

#[derive(Debug, Serialize)]
pub struct UploadResponse {
    pub dataset_id: String,
    pub name: String,
    pub schema: Vec<ColumnSchema>,
    pub row_count: usize,
}

pub async fn upload_dataset(
    State(state): State<Arc<AppState>>,
    params: Result<Query<UploadParams>, QueryRejection>,
    body: Result<Bytes, BytesRejection>,
) -> ApiResult<(StatusCode, Json<UploadResponse>)> {
    let params = query(params)?;
    let body = body.map_err(|e| {
        if e.status() == StatusCode::PAYLOAD_TOO_LARGE {
            ApiError::new(
                StatusCode::PAYLOAD_TOO_LARGE,
                "PAYLOAD_TOO_LARGE",
                format!("upload exceeds {} bytes", state.config.max_upload_bytes),
            )
        } else {
            ApiError::bad_request(e.body_text())
        }
    })?;
    let mut csv_options = CsvOptions::default();
    if let Some(d) = params.delimiter {
        csv_options.delimiter = d;
    }
    if let Some(h) = params.has_header {
        csv_options.has_header = h;
    }
    if let Some(tokens) = &params.null_tokens {
        csv_options.null_tokens = tokens.split(',').map(str::to_string).collect();
    }
    let name = params.name.unwrap_or_else(|| "dataset.csv".to_string());
    let bytes: Arc<[u8]> = Arc::from(body.to_vec());
    let (schema, row_count, bytes, csv_options) = blocking(move || {
        let table = load_typed(&bytes, &csv_options, &DetectorConfig::default())?;
        let schema = table
            .kinds()
            .into_iter()
            .map(|(name, kind)| ColumnSchema { name, kind })
            .collect::<Vec<_>>();
        Ok((schema, table.row_count(), bytes, csv_options))
    })
    .await?;
    let dataset_id = state.store.add_dataset(Dataset {
        name: name.clone(),
        bytes,
        csv_options,
        schema: schema.clone(),
        row_count,
    });
    Ok((
        StatusCode::CREATED,
        Json(UploadResponse {
            dataset_id,
            name,
            schema,
            row_count,
        }),
    ))
}

#[derive(Debug, Deserialize)]
pub struct CreateSession {
    pub dataset_id: String,
    #[serde(default)]
    pub config: DetectorConfig,
    #[serde(default)]
    pub specs: Option<Vec<GroupSpec>>,
}

#[derive(Debug, Serialize)]
pub struct AnomalySummary {
    pub total: usize,
    pub counts: BTreeMap<AnomalyType, usize>,
    pub groups_with_anomalies: usize,
}

fn anomaly_summary(session: &Session) -> AnomalySummary {
    let d = session.detection();
    AnomalySummary {
        total: d.records.len(),
        counts: d.counts_by_type(),
        groups_with_anomalies: d.index.by_group.len(),
    }
}

#[derive(Debug, Serialize)]
pub struct SessionInfo {
    pub session_id: String,
    pub dataset_id: Option<String>,
    pub version: u64,
    pub specs: Vec<GroupSpec>,
    pub config: DetectorConfig,
    pub undo_depth: usize,
    pub redo_depth: usize,
    pub anomaly_summary: AnomalySummary,
}

fn session_info(id: &str, dataset_id: Option<String>, s: &Session) -> SessionInfo {
    SessionInfo {
        session_id: id.to_string(),
        dataset_id,
        version: s.version(),
        specs: s.specs().to_vec(),
        config: s.config().clone(),
        undo_depth: s.undo_stack().len(),
        redo_depth: s.redo_stack().len(),
        anomaly_summary: anomaly_summary(s),
    }
}

pub async fn create_session(
    State(state): State<Arc<AppState>>,
    body: Result<Json<CreateSession>, JsonRejection>,
) -> ApiResult<(StatusCode, Json<SessionInfo>)> {
    let req = json_body(body)?;
    let dataset = state
        .store
        .dataset(&req.dataset_id)
        .ok_or_else(|| ApiError::not_found("DATASET_NOT_FOUND", format!("no dataset {}", req.dataset_id)))?;
    let extensions = state.store.extensions().clone();
    let session = blocking(move || {
        Ok(Session::from_csv(
            &dataset.bytes,
            &dataset.name,
            dataset.csv_options.clone(),
            req.config,
            req.specs,
            extensions,
        )?)
    })
    .await?;
    let info = session_info(session.id(), Some(req.dataset_id.clone()), &session);
    state.store.add_session(&req.dataset_id, session);
    Ok((StatusCode::CREATED, Json(info)))
}

pub async fn get_session(State(state): State<Arc<AppState>>, Path(id): Path<String>) -> ApiResult<Json<SessionInfo>> {
    let key = id.clone();
    with_session(&state, &id, move |s| Ok(Json(session_info(&key, None, s)))).await
}

#[derive(Debug, Deserialize)]
pub struct TopK {
    pub top_k: Option<usize>,
}

#[derive(Debug, Serialize)]
pub struct AnomaliesResponse {
    pub version: u64,
    pub top_k: usize,
    pub total: usize,
    pub counts: BTreeMap<AnomalyType, usize>,
    pub ranked: Vec<RankedGroup>,
    pub records: Vec<AnomalyRecord>,
    pub index: AnomalyIndex,
}

pub async fn anomalies(
    State(state): State<Arc<AppState>>,
    Path(id): Path<String>,
    q: Result<Query<TopK>, QueryRejection>,
) -> ApiResult<Json<AnomaliesResponse>> {
    let top_k = query(q)?.top_k;
    with_session(&state, &id, move |s| {
        let top_k = top_k.unwrap_or(s.config().top_k);
        let report = build_report(s, top_k);
        Ok(Json(AnomaliesResponse {
            version: report.version,
            top_k,
            total: report.total,
            counts: report.counts,
            ranked: report.ranked,
            records: s.records().to_vec(),
            index: s.detection().index.clone(),
        }))
    })
    .await
}

#[derive(Debug, Serialize)]
pub struct SummaryResponse {
    pub version: u64,
    pub attributes: Vec<AttributeSummary>,
}

pub async fn summary(State(state): State<Arc<AppState>>, Path(id): Path<String>) -> ApiResult<Json<SummaryResponse>> {
    with_session(&state, &id, |s| {
        let report = build_report(s, s.config().top_k);
        Ok(Json(SummaryResponse {
            version: report.version,
            attributes: report.attributes,
        }))
    })
    .await
}

#[derive(Debug, Deserialize)]
pub struct ChartQuery {
    pub group_by: String,
    pub target: String,
    pub kind: Option<String>,
    pub mode: Option<String>,
}

pub async fn chart(
    State(state): State<Arc<AppState>>,
    Path(id): Path<String>,
    q: Result<Query<ChartQuery>, QueryRejection>,
) -> ApiResult<Json<ChartPayload>> {
    let q = query(q)?;
    let kind: ChartKind = q.kind.as_deref().unwrap_or("stacked_histogram").parse()?;
    let mode: ColorMode = q.mode.as_deref().unwrap_or("group_name").parse()?;
    with_session(&state, &id, move |s| {
        let spec = s
            .specs()
            .iter()
            .find(|sp| sp.group_by == q.group_by && sp.target == q.target)
            .cloned()
            .ok_or_else(|| Error::InvalidSpec(format!("{} by {} is not a spec of this session", q.target, q.group_by)))?;
        Ok(Json(chart_payload(s.table(), &spec, kind, mode, s.records())?))
    })
    .await
}

/// Either an inline record or the position of one in the current record list.
#[derive(Debug, Deserialize)]
pub struct SuggestRequest {
    pub record: Option<AnomalyRecord>,
    pub record_index: Option<usize>,
}

#[derive(Debug, Serialize)]
pub struct SuggestResponse {
    pub version: u64,
    pub record: AnomalyRecord,
    pub actions: Vec<RepairAction>,
}

pub async fn suggestions(
    State(state): State<Arc<AppState>>,
    Path(id): Path<String>,
    body: Result<Json<SuggestRequest>, JsonRejection>,
) -> ApiResult<Json<SuggestResponse>> {
    let req = json_body(body)?;
    let handle = session_handle(&state, &id)?;
    let (record, keys) = {
        let s = handle.lock();
        let record = match (req.record, req.record_index) {
            (Some(r), _) => r,
            (None, Some(i)) => s
                .records()
                .get(i)
                .cloned()
                .ok_or_else(|| Error::StaleRecord(format!("record index {i} out of range")))?,
            (None, None) => return Err(ApiError::bad_request("record or record_index is required")),
        };
        let keys: Vec<String> = s
            .groups_for(&record.group.group_by, &record.group.target)
            .unwrap_or_default()
            .iter()
            .filter_map(|g| match &g.key {
                GroupKey::Value(k) => Some(k.clone()),
                GroupKey::Missing => None,
            })
            .collect();
        (record, keys)
    };
    let similarity = match (&state.embedding, record.kind == AnomalyType::IncompleteGroup) {
        (Some(client), true) => Some(client.similarity_for(&keys).await),
        _ => None,
    };
    blocking(move || {
        let s = handle.lock();
        let actions = match &similarity {
            Some(sim) => s.suggest_with(&record, sim.as_ref())?,
            None => s.suggest(&record)?,
        };
        Ok(Json(SuggestResponse {
            version: s.version(),
            record,
            actions,
        }))
    })
    .await
}

#[derive(Debug, Deserialize)]
pub struct ActionRequest {
    pub action: RepairAction,
    /// Rejects the request with 409 when the session has moved on.
    pub expected_version: Option<u64>,
}

pub async fn preview(
    State(state): State<Arc<AppState>>,
    Path(id): Path<String>,
    body: Result<Json<ActionRequest>, JsonRejection>,
) -> ApiResult<Json<Preview>> {
    let req = json_body(body)?;
    with_session(&state, &id, move |s| {
        check_version(s, req.expected_version)?;
        Ok(Json(s.preview(&req.action)?))
    })
    .await
}

fn check_version(s: &Session, expected: Option<u64>) -> Result<(), Error> {
    match expected {
        Some(v) if v != s.version() => Err(Error::VersionConflict {
            expected: v,
            found: s.version(),
        }),
        _ => Ok(()),
    }
}

#[derive(Debug, Serialize)]
pub struct ActionResponse {
    pub version: u64,
    pub action: RepairAction,
    pub diff: ActionDiff,
    pub anomalies_before: BTreeMap<AnomalyType, usize>,
    pub anomalies_after: BTreeMap<AnomalyType, usize>,
    /// after minus before, per type present in either.
    pub anomaly_delta: BTreeMap<AnomalyType, i64>,
    pub undo_depth: usize,
    pub redo_depth: usize,
}

fn mutate(
    s: &mut Session,
    op: impl FnOnce(&mut Session) -> Result<(RepairAction, ActionDiff), Error>,
) -> Result<ActionResponse, Error> {
    let before = s.detection().counts_by_type();
    let (action, diff) = op(s)?;
    let after = s.detection().counts_by_type();
    let mut delta = BTreeMap::new();
    for t in before.keys().chain(after.keys()) {
        let d = *after.get(t).unwrap_or(&0) as i64 - *before.get(t).unwrap_or(&0) as i64;
        delta.insert(t.clone(), d);
    }
    Ok(ActionResponse {
        version: s.version(),
        action,
        diff,
        anomalies_before: before,
        anomalies_after: after,
        anomaly_delta: delta,
        undo_depth: s.undo_stack().len(),
        redo_depth: s.redo_stack().len(),
    })
}

pub async fn commit(
    State(state): State<Arc<AppState>>,
    Path(id): Path<String>,
    body: Result<Json<ActionRequest>, JsonRejection>,
) -> ApiResult<Json<ActionResponse>> {
    let req = json_body(body)?;
    with_session(&state, &id, move |s| {
        check_version(s, req.expected_version)?;
        Ok(Json(mutate(s, |s| {
            let e = s.commit(req.action)?;
            Ok((e.action.clone(), e.diff.clone()))
        })?))
    })
    .await
}

pub async fn undo(State(state): State<Arc<AppState>>, Path(id): Path<String>) -> ApiResult<Json<ActionResponse>> {
    with_session(&state, &id, |s| {
        Ok(Json(mutate(s, |s| {
            let e = s.undo()?;
            Ok((e.action.clone(), e.diff.clone()))
        })?))
    })
    .await
}

pub async fn redo(State(state): State<Arc<AppState>>, Path(id): Path<String>) -> ApiResult<Json<ActionResponse>> {
    with_session(&state, &id, |s| {
        Ok(Json(mutate(s, |s| {
            let e = s.redo()?;
            Ok((e.action.clone(), e.diff.clone()))
        })?))
    })
    .await
}

pub async fn script(State(state): State<Arc<AppState>>, Path(id): Path<String>) -> ApiResult<Json<ScriptArtifact>> {
    with_session(&state, &id, |s| Ok(Json(generate_script(s)?))).await
}

pub async fn export(State(state): State<Arc<AppState>>, Path(id): Path<String>) -> ApiResult<Json<SessionExport>> {
    with_session(&state, &id, |s| Ok(Json(s.export()))).await
}

#[derive(Debug, Deserialize)]
pub struct TableQuery {
    pub format: Option<String>,
}

pub async fn table(
    State(state): State<Arc<AppState>>,
    Path(id): Path<String>,
    q: Result<Query<TableQuery>, QueryRejection>,
) -> ApiResult<Response> {
    let format = query(q)?.format.unwrap_or_else(|| "csv".into());
    if format != "csv" {
        return Err(Error::UnsupportedKind(format!("table format {format}")).into());
    }
    let body = with_session(&state, &id, |s| Ok(serialize_csv(s.table(), s.csv_options()))).await?;
    Ok(([(header::CONTENT_TYPE, "text/csv; charset=utf-8")], body).into_response())
}

pub async fn fallback() -> ApiError {
    ApiError::not_found("NOT_FOUND", "no such endpoint")
}
