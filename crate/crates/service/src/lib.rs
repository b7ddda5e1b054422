//! HTTP task service. Tasks are created from an uploaded micrograph plus a
//! flow field or label map, then filtered, corrected and reported on.
//!
//! | method | path | body / result |
//! |---|---|---|
//! | POST | `/tasks` | multipart `image`, `flow?`, `labels?`, `detections?`, `params?`, `name?` → [`TaskStatus`] |
//! | GET | `/tasks` | list of [`TaskStatus`] |
//! | GET | `/tasks/{id}` | [`TaskStatus`] |
//! | GET | `/tasks/{id}/results` | [`ResultsDocument`] |
//! | PUT | `/tasks/{id}/filter` | [`FilterCriteria`] → [`FilterResponse`] |
//! | POST | `/tasks/{id}/corrections` | [`CorrectionRequest`] → [`CorrectionResponse`] |
//! | GET | `/tasks/{id}/events` | mutation log |
//! | GET | `/tasks/{id}/report`, `/report.json` | HTML report and its JSON twin |
//! | GET | `/tasks/{id}/image`, `/overlay.png`, `/labels.png` | rasters |
//! | GET | `/tasks/{id}/charts/histogram`, `/charts/scatter` | chart data |
//! | GET | `/charts/box?tasks=a,b` | box comparison across tasks |
//!
//! Errors are `{"code": ..., "message": ...}`.

pub mod overlay;
pub mod store;

use std::collections::BTreeSet;
use std::future::Future;
use std::path::PathBuf;
use std::sync::Arc;

use axum::body::{Body, Bytes};
use axum::extract::rejection::{JsonRejection, QueryRejection};
use axum::extract::{DefaultBodyLimit, Multipart, Path, Query, State};
use axum::http::{header, StatusCode};
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post, put};
use axum::{Json, Router};
use granula_core::api::{BoxQuery, CorrectionRequest, ErrorBody, HistogramQuery, ScatterQuery, TaskState, TaskStatus};
use granula_core::imagecore::{encode_labels_png, encode_raster_png};
use granula_core::metrology::{Binning, FilterCriteria, Quantity};
use granula_core::pipeline::PipelineConfig;
use granula_core::report::{build_box, build_histogram, build_report, build_scatter, render_report, Axis, ChartData, Provenance, ReportDocument, SampleInput};
use serde::Deserialize;

pub use store::{NewTask, StoreError, Task, TaskStore};

/// Images up to this many pixels are processed before `POST /tasks`
/// returns; larger ones answer 202 and process in the background.
pub const DEFAULT_SYNC_PIXELS: usize = 2048 * 2048;
pub const DEFAULT_BODY_LIMIT: usize = 512 << 20;

#[derive(Debug, Clone)]
pub struct ServiceConfig {
    pub data_dir: PathBuf,
    pub pipeline: PipelineConfig,
    pub sync_pixels: usize,
    pub body_limit: usize,
}

impl ServiceConfig {
    pub fn new(data_dir: impl Into<PathBuf>) -> Self {
        Self { data_dir: data_dir.into(), pipeline: PipelineConfig::default(), sync_pixels: DEFAULT_SYNC_PIXELS, body_limit: DEFAULT_BODY_LIMIT }
    }
}

#[derive(Clone)]
struct AppState {
    store: Arc<TaskStore>,
    sync_pixels: usize,
}

/// Error response with a stable machine-readable code.
#[derive(Debug)]
pub struct ApiError {
    status: StatusCode,
    body: ErrorBody,
}

impl ApiError {
    fn new(status: StatusCode, code: &str, message: impl Into<String>) -> Self {
        Self { status, body: ErrorBody { code: code.into(), message: message.into() } }
    }

    fn bad_request(message: impl Into<String>) -> Self {
        Self::new(StatusCode::BAD_REQUEST, "bad_request", message)
    }
}

impl From<StoreError> for ApiError {
    fn from(e: StoreError) -> Self {
        let msg = e.to_string();
        match e {
            StoreError::NotFound(_) => Self::new(StatusCode::NOT_FOUND, "not_found", msg),
            StoreError::NotReady(_) => Self::new(StatusCode::CONFLICT, "not_ready", msg),
            StoreError::Correction(_) => Self::new(StatusCode::UNPROCESSABLE_ENTITY, "invalid_correction", msg),
            StoreError::Filter(_) => Self::new(StatusCode::UNPROCESSABLE_ENTITY, "invalid_filter", msg),
            StoreError::BadRequest(_) => Self::bad_request(msg),
            StoreError::UnknownMetric(_) => Self::new(StatusCode::BAD_REQUEST, "unknown_metric", msg),
            StoreError::Io(_) | StoreError::Internal(_) => Self::new(StatusCode::INTERNAL_SERVER_ERROR, "internal", msg),
        }
    }
}

impl From<JsonRejection> for ApiError {
    fn from(e: JsonRejection) -> Self {
        Self::bad_request(e.body_text())
    }
}

impl From<QueryRejection> for ApiError {
    fn from(e: QueryRejection) -> Self {
        Self::bad_request(e.body_text())
    }
}

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        (self.status, Json(self.body)).into_response()
    }
}

type ApiResult<T> = Result<T, ApiError>;

async fn blocking<T: Send + 'static>(f: impl FnOnce() -> Result<T, StoreError> + Send + 'static) -> ApiResult<T> {
    tokio::task::spawn_blocking(f)
        .await
        .map_err(|e| ApiError::new(StatusCode::INTERNAL_SERVER_ERROR, "internal", e.to_string()))?
        .map_err(ApiError::from)
}

/// Opens the store, resumes interrupted tasks and returns the router.
pub fn app(cfg: &ServiceConfig) -> anyhow::Result<(Router, Arc<TaskStore>)> {
    let (store, pending) = TaskStore::open(&cfg.data_dir, cfg.pipeline.clone())?;
    let store = Arc::new(store);
    for id in pending {
        let s = store.clone();
        std::thread::spawn(move || {
            if let Err(e) = s.process(&id) {
                tracing::warn!(task = %id, "resume failed: {e}");
            }
        });
    }
    Ok((router(store.clone(), cfg.sync_pixels, cfg.body_limit), store))
}

pub fn router(store: Arc<TaskStore>, sync_pixels: usize, body_limit: usize) -> Router {
    Router::new()
        .route("/health", get(|| async { Json(serde_json::json!({"status": "ok"})) }))
        .route("/tasks", post(create_task).get(list_tasks))
        .route("/tasks/{id}", get(task_status))
        .route("/tasks/{id}/results", get(results))
        .route("/tasks/{id}/filter", put(set_filter))
        .route("/tasks/{id}/corrections", post(correct))
        .route("/tasks/{id}/events", get(events))
        .route("/tasks/{id}/report", get(report_html))
        .route("/tasks/{id}/report.json", get(report_json))
        .route("/tasks/{id}/image", get(image))
        .route("/tasks/{id}/overlay.png", get(overlay_png))
        .route("/tasks/{id}/labels.png", get(labels_png))
        .route("/tasks/{id}/charts/histogram", get(histogram_chart))
        .route("/tasks/{id}/charts/scatter", get(scatter_chart))
        .route("/charts/box", get(box_chart))
        .fallback(|| async { ApiError::new(StatusCode::NOT_FOUND, "not_found", "no such endpoint") })
        .layer(DefaultBodyLimit::max(body_limit))
        .with_state(AppState { store, sync_pixels })
}

/// Serves until `shutdown` resolves.
pub async fn serve(listener: tokio::net::TcpListener, router: Router, shutdown: impl Future<Output = ()> + Send + 'static) -> std::io::Result<()> {
    axum::serve(listener, router).with_graceful_shutdown(shutdown).await
}

async fn read_multipart(mut mp: Multipart) -> ApiResult<NewTask> {
    let mut new = NewTask::default();
    let mut image = None;
    while let Some(field) = mp.next_field().await.map_err(|e| ApiError::bad_request(e.body_text()))? {
        let name = field.name().unwrap_or_default().to_string();
        let file_name = field.file_name().map(str::to_string);
        let bytes = field.bytes().await.map_err(|e| ApiError::bad_request(e.body_text()))?.to_vec();
        match name.as_str() {
            "image" => {
                if new.name.is_none() {
                    new.name = file_name;
                }
                image = Some(bytes);
            }
            "flow" => new.flow = Some(bytes),
            "labels" => new.labels = Some(bytes),
            "detections" => new.detections = Some(bytes),
            "params" => {
                let cfg: PipelineConfig = serde_json::from_slice(&bytes).map_err(|e| ApiError::bad_request(format!("params: {e}")))?;
                new.config = Some(cfg);
            }
            "name" => new.name = Some(String::from_utf8_lossy(&bytes).into_owned()),
            other => return Err(ApiError::bad_request(format!("unexpected multipart field '{other}'"))),
        }
    }
    new.image = image.ok_or_else(|| ApiError::bad_request("missing multipart field 'image'"))?;
    Ok(new)
}

async fn create_task(State(app): State<AppState>, mp: Multipart) -> ApiResult<(StatusCode, Json<TaskStatus>)> {
    let new = read_multipart(mp).await?;
    let store = app.store.clone();
    let (id, pixels) = blocking(move || store.create(new)).await?;
    let store = app.store.clone();
    if pixels == 0 {
        let st = store.get(&id)?.read().status();
        return Ok((StatusCode::CREATED, Json(st)));
    }
    if pixels <= app.sync_pixels {
        let st = blocking(move || store.process(&id)).await?;
        return Ok((StatusCode::CREATED, Json(st)));
    }
    let st = store.get(&id)?.read().status();
    tokio::task::spawn_blocking(move || {
        if let Err(e) = store.process(&id) {
            tracing::warn!(task = %id, "processing error: {e}");
        }
    });
    Ok((StatusCode::ACCEPTED, Json(TaskStatus { state: TaskState::Processing, ..st })))
}

async fn list_tasks(State(app): State<AppState>) -> ApiResult<Json<Vec<TaskStatus>>> {
    let store = app.store.clone();
    blocking(move || store.ids().iter().map(|id| Ok(store.get(id)?.read().status())).collect()).await.map(Json)
}

async fn task_status(State(app): State<AppState>, Path(id): Path<String>) -> ApiResult<Json<TaskStatus>> {
    Ok(Json(app.store.get(&id)?.read().status()))
}

/// Runs `f` on the task under its read lock.
async fn with_task<T: Send + 'static>(app: &AppState, id: String, f: impl FnOnce(&Task) -> Result<T, StoreError> + Send + 'static) -> ApiResult<T> {
    let store = app.store.clone();
    blocking(move || f(&store.get(&id)?.read())).await
}

fn json_bytes<T: serde::Serialize>(v: &T) -> Response {
    match serde_json::to_vec(v) {
        Ok(b) => ([(header::CONTENT_TYPE, "application/json")], b).into_response(),
        Err(e) => ApiError::new(StatusCode::INTERNAL_SERVER_ERROR, "internal", e.to_string()).into_response(),
    }
}

async fn results(State(app): State<AppState>, Path(id): Path<String>) -> ApiResult<Response> {
    let doc = with_task(&app, id, |t| t.results()).await?;
    Ok(json_bytes(&doc))
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct AuthorQuery {
    author: Option<String>,
}

async fn set_filter(
    State(app): State<AppState>,
    Path(id): Path<String>,
    author: Result<Query<AuthorQuery>, QueryRejection>,
    body: Result<Json<FilterCriteria>, JsonRejection>,
) -> ApiResult<Response> {
    let Query(a) = author?;
    let Json(fc) = body?;
    let store = app.store.clone();
    let r = blocking(move || store.set_filter(&id, fc, a.author)).await?;
    Ok(json_bytes(&r))
}

async fn correct(State(app): State<AppState>, Path(id): Path<String>, body: Result<Json<CorrectionRequest>, JsonRejection>) -> ApiResult<Response> {
    let Json(req) = body?;
    let store = app.store.clone();
    let r = blocking(move || store.apply_correction(&id, req)).await?;
    Ok(json_bytes(&r))
}

async fn events(State(app): State<AppState>, Path(id): Path<String>) -> ApiResult<Response> {
    let ev = with_task(&app, id, |t| Ok(t.live()?.events.clone())).await?;
    Ok(json_bytes(&ev))
}

fn report_doc(t: &Task) -> Result<ReportDocument, StoreError> {
    let live = t.live()?;
    let input = SampleInput { name: t.name(), metrics: &live.instances, calibration: live.scale.calibration.as_ref(), filter: &live.filter };
    let params = serde_json::json!({ "config": t.config(), "filter": live.filter });
    let prov = Provenance::new(t.inputs().to_vec(), params, Some(live.version()));
    Ok(build_report(&[input], &t.config().report, prov)?)
}

async fn report_html(State(app): State<AppState>, Path(id): Path<String>) -> ApiResult<Response> {
    let r = with_task(&app, id, |t| Ok(render_report(&report_doc(t)?))).await?;
    Ok(([(header::CONTENT_TYPE, "text/html; charset=utf-8")], r.html).into_response())
}

async fn report_json(State(app): State<AppState>, Path(id): Path<String>) -> ApiResult<Response> {
    let r = with_task(&app, id, |t| Ok(render_report(&report_doc(t)?))).await?;
    Ok(([(header::CONTENT_TYPE, "application/json")], r.json).into_response())
}

fn png(bytes: Vec<u8>) -> Response {
    ([(header::CONTENT_TYPE, "image/png")], Body::from(Bytes::from(bytes))).into_response()
}

async fn image(State(app): State<AppState>, Path(id): Path<String>) -> ApiResult<Response> {
    let store = app.store.clone();
    let bytes = blocking(move || store.image_bytes(&id)).await?;
    Ok(([(header::CONTENT_TYPE, "application/octet-stream")], bytes).into_response())
}

async fn overlay_png(State(app): State<AppState>, Path(id): Path<String>) -> ApiResult<Response> {
    let bytes = with_task(&app, id, |t| {
        let live = t.live()?;
        let kept: BTreeSet<u32> = live.kept()?.iter().map(|m| m.id).collect();
        let img = overlay::render_overlay(&live.image, &live.edit.labels, &kept, &live.scale);
        encode_raster_png(&img).map_err(|e| StoreError::Internal(e.to_string()))
    })
    .await?;
    Ok(png(bytes))
}

async fn labels_png(State(app): State<AppState>, Path(id): Path<String>) -> ApiResult<Response> {
    let bytes = with_task(&app, id, |t| encode_labels_png(&t.live()?.edit.labels).map_err(|e| StoreError::Internal(e.to_string()))).await?;
    Ok(png(bytes))
}

fn parse_quantity(s: Option<&str>, default: Quantity) -> Result<Quantity, StoreError> {
    match s {
        Some(s) => s.parse().map_err(|e: granula_core::metrology::UnknownQuantity| StoreError::UnknownMetric(e.to_string())),
        None => Ok(default),
    }
}

fn diameter_of(t: &Task) -> Result<Quantity, StoreError> {
    Ok(if t.live()?.scale.calibration.is_some() { Quantity::DiameterPhys } else { Quantity::DiameterPx })
}

async fn histogram_chart(State(app): State<AppState>, Path(id): Path<String>, q: Result<Query<HistogramQuery>, QueryRejection>) -> ApiResult<Json<ChartData>> {
    let Query(q) = q?;
    with_task(&app, id, move |t| {
        let live = t.live()?;
        let quantity = parse_quantity(q.quantity.as_deref(), diameter_of(t)?)?;
        let opts = &t.config().report;
        let binning = match (q.bin_width, q.bins) {
            (Some(w), _) => Binning::Width(w),
            (None, Some(n)) => Binning::Count(n),
            (None, None) => opts.binning,
        };
        let title = format!("{}: {} distribution", t.name(), quantity.name().replace('_', " "));
        let chart = build_histogram(&live.kept()?, quantity, q.weighting.unwrap_or(opts.weighting), binning, &title);
        chart.map_err(|e| match e {
            granula_core::report::ReportError::Metrology(granula_core::metrology::MetrologyError::InvalidBinning) => StoreError::BadRequest(e.to_string()),
            e => e.into(),
        })
    })
    .await
    .map(Json)
}

async fn scatter_chart(State(app): State<AppState>, Path(id): Path<String>, q: Result<Query<ScatterQuery>, QueryRejection>) -> ApiResult<Json<ChartData>> {
    let Query(q) = q?;
    with_task(&app, id, move |t| {
        let x = q.x.unwrap_or_else(|| diameter_of(t).map(|d| d.name().to_string()).unwrap_or_default());
        let y = q.y.unwrap_or_else(|| Quantity::Sphericity.name().to_string());
        let mut chart = build_scatter(&t.live()?.kept()?, &x, &y)?;
        if let ChartData::Scatter(c) = &mut chart {
            c.title = format!("{}: {}", t.name(), c.title);
        }
        Ok(chart)
    })
    .await
    .map(Json)
}

async fn box_chart(State(app): State<AppState>, q: Result<Query<BoxQuery>, QueryRejection>) -> ApiResult<Json<ChartData>> {
    let Query(q) = q?;
    let ids: Vec<String> = q.tasks.split(',').map(str::trim).filter(|s| !s.is_empty()).map(str::to_string).collect();
    if ids.is_empty() {
        return Err(ApiError::bad_request("tasks must list at least one id"));
    }
    let store = app.store.clone();
    blocking(move || {
        let mut groups = Vec::new();
        let mut quantity = None;
        for id in &ids {
            let handle = store.get(id)?;
            let t = handle.read();
            let q = match quantity {
                Some(q) => q,
                None => *quantity.insert(parse_quantity(q.quantity.as_deref(), diameter_of(&t)?)?),
            };
            let kept = t.live()?.kept()?;
            if !kept.is_empty() {
                groups.push((t.name().to_string(), q.values(&kept).map_err(StoreError::Filter)?));
            }
        }
        let quantity = quantity.expect("at least one id");
        if groups.is_empty() {
            return Err(StoreError::BadRequest("no instances survive the filters".into()));
        }
        Ok(build_box(&groups, Axis::of(quantity), &format!("Comparison of {}", quantity.name().replace('_', " ")))?)
    })
    .await
    .map(Json)
}
