//! On-disk task store. One directory per task:
//!
//! ```text
//! <root>/<id>/task.json          metadata and effective config
//! <root>/<id>/input/...          uploaded bytes, unmodified
//! <root>/<id>/base_labels.png    segmentation before any correction
//! <root>/<id>/scale.json         scale-bar reading
//! <root>/<id>/events.jsonl       append-only corrections and filter changes
//! <root>/<id>/results.json       derived cache, rewritten after each change
//! ```
//!
//! Live state is always rebuilt from the base labels and the event log, so a
//! restarted store reproduces the exact same derived documents.

use std::collections::{BTreeMap, BTreeSet};
use std::fs::{self, OpenOptions};
use std::io::Write;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use granula_core::api::{
    Change, CorrectionRequest, CorrectionResponse, FilterResponse, InstanceRecord, ResultsDocument, TaskEvent, TaskState,
    TaskStatus, API_SCHEMA_VERSION,
};
use granula_core::corrections::{CorrectionError, EditState};
use granula_core::imagecore::{decode_flow, decode_labels_png, decode_raster, encode_labels_png, runs_by_label, LabelMap, Raster8};
use granula_core::metrology::{filter_instances, FilterCriteria, InstanceMetrics, MetrologyError};
use granula_core::pipeline::{read_scale, segment_input, summarize_labels, PipelineConfig, PipelineError, ScaleStatus, SegmentationSource};
use granula_core::report::{InputDigest, ReportError, SampleSummary};
use granula_core::scalebar::parse_external;
use parking_lot::RwLock;
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum StoreError {
    #[error("task {0} not found")]
    NotFound(String),
    #[error("task is {0:?}, not ready")]
    NotReady(TaskState),
    #[error(transparent)]
    Correction(#[from] CorrectionError),
    #[error("{0}")]
    Filter(MetrologyError),
    #[error("{0}")]
    BadRequest(String),
    #[error("{0}")]
    UnknownMetric(String),
    #[error("storage: {0}")]
    Io(#[from] std::io::Error),
    #[error("{0}")]
    Internal(String),
}

impl From<ReportError> for StoreError {
    fn from(e: ReportError) -> Self {
        match e {
            ReportError::UnknownMetric(u) => Self::UnknownMetric(u.to_string()),
            ReportError::Metrology(m) => Self::Filter(m),
            e => Self::BadRequest(e.to_string()),
        }
    }
}

impl From<PipelineError> for StoreError {
    fn from(e: PipelineError) -> Self {
        match e {
            PipelineError::Metrology(m) => Self::Filter(m),
            PipelineError::Report(r) => r.into(),
            e => Self::Internal(e.to_string()),
        }
    }
}

fn internal(e: impl std::fmt::Display) -> StoreError {
    StoreError::Internal(e.to_string())
}

#[derive(Debug, Clone, Serialize, Deserialize)]
struct TaskMeta {
    schema_version: u32,
    id: String,
    name: String,
    state: TaskState,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    reason: Option<String>,
    created_at: String,
    config: PipelineConfig,
    inputs: Vec<InputDigest>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    width: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    height: Option<usize>,
}

/// Everything derived for a ready task.
pub struct Live {
    pub image: Raster8,
    pub base: LabelMap,
    pub scale: ScaleStatus,
    pub events: Vec<TaskEvent>,
    pub edit: EditState,
    pub filter: FilterCriteria,
    /// All instances, unfiltered, in id order.
    pub instances: Vec<InstanceMetrics>,
    pub summary: SampleSummary,
}

impl Live {
    pub fn version(&self) -> u64 {
        1 + self.events.len() as u64
    }

    pub fn kept(&self) -> Result<Vec<InstanceMetrics>, StoreError> {
        filter_instances(&self.instances, &self.filter).map_err(StoreError::Filter)
    }
}

pub struct Task {
    meta: TaskMeta,
    live: Option<Live>,
}

impl Task {
    pub fn id(&self) -> &str {
        &self.meta.id
    }

    pub fn name(&self) -> &str {
        &self.meta.name
    }

    pub fn config(&self) -> &PipelineConfig {
        &self.meta.config
    }

    pub fn inputs(&self) -> &[InputDigest] {
        &self.meta.inputs
    }

    pub fn live(&self) -> Result<&Live, StoreError> {
        self.live.as_ref().ok_or(StoreError::NotReady(self.meta.state))
    }

    pub fn status(&self) -> TaskStatus {
        TaskStatus {
            schema_version: API_SCHEMA_VERSION,
            id: self.meta.id.clone(),
            name: self.meta.name.clone(),
            state: self.meta.state,
            version: self.live.as_ref().map_or(0, Live::version),
            reason: self.meta.reason.clone(),
            created_at: self.meta.created_at.clone(),
            width: self.meta.width,
            height: self.meta.height,
            instance_count: self.live.as_ref().map(|l| l.instances.len()),
        }
    }

    pub fn results(&self) -> Result<ResultsDocument, StoreError> {
        let live = self.live()?;
        let kept: BTreeSet<u32> = live.kept()?.iter().map(|m| m.id).collect();
        let mut runs = runs_by_label(&live.edit.labels);
        let boxes = live.edit.labels.bounding_boxes();
        let instances = live
            .instances
            .iter()
            .map(|m| InstanceRecord {
                id: m.id,
                bbox: boxes[&m.id].into(),
                rle: runs.remove(&m.id).expect("measured ids have pixels"),
                passes_filter: kept.contains(&m.id),
                metrics: m.clone(),
            })
            .collect();
        Ok(ResultsDocument {
            schema_version: API_SCHEMA_VERSION,
            id: self.meta.id.clone(),
            version: live.version(),
            width: live.edit.labels.width(),
            height: live.edit.labels.height(),
            scale: live.scale.clone(),
            filter: live.filter.clone(),
            weighting: self.meta.config.report.weighting,
            instances,
            summary: live.summary.clone(),
        })
    }
}

/// Uploaded inputs for a new task.
#[derive(Debug, Clone, Default)]
pub struct NewTask {
    pub name: Option<String>,
    pub image: Vec<u8>,
    pub flow: Option<Vec<u8>>,
    pub labels: Option<Vec<u8>>,
    pub detections: Option<Vec<u8>>,
    pub config: Option<PipelineConfig>,
}

pub type TaskHandle = Arc<RwLock<Task>>;

pub struct TaskStore {
    root: PathBuf,
    default_config: PipelineConfig,
    tasks: RwLock<BTreeMap<String, TaskHandle>>,
}

const IMAGE: &str = "input/image";
const FLOW: &str = "input/flow.uafl";
const LABELS: &str = "input/labels.png";
const DETECTIONS: &str = "input/detections.json";

impl TaskStore {
    /// Opens `root`, rebuilding every ready task from its log. Returns the
    /// ids of tasks whose processing was interrupted; they need
    /// [`TaskStore::process`] again.
    pub fn open(root: impl Into<PathBuf>, default_config: PipelineConfig) -> Result<(Self, Vec<String>), StoreError> {
        let root = root.into();
        fs::create_dir_all(&root)?;
        let mut tasks = BTreeMap::new();
        let mut pending = Vec::new();
        let mut dirs: Vec<PathBuf> = fs::read_dir(&root)?.filter_map(|e| e.ok().map(|e| e.path())).filter(|p| p.join("task.json").is_file()).collect();
        dirs.sort();
        for dir in dirs {
            let meta: TaskMeta = match fs::read(dir.join("task.json")).map_err(internal).and_then(|b| serde_json::from_slice(&b).map_err(internal)) {
                Ok(m) => m,
                Err(e) => {
                    tracing::warn!(dir = %dir.display(), "skipping unreadable task: {e}");
                    continue;
                }
            };
            let mut task = Task { meta, live: None };
            match task.meta.state {
                TaskState::Ready => match load_live(&dir, &task.meta) {
                    Ok(live) => task.live = Some(live),
                    Err(e) => {
                        task.meta.state = TaskState::Failed;
                        task.meta.reason = Some(format!("replay failed: {e}"));
                    }
                },
                TaskState::Created | TaskState::Processing => pending.push(task.meta.id.clone()),
                TaskState::Failed => {}
            }
            tasks.insert(task.meta.id.clone(), Arc::new(RwLock::new(task)));
        }
        Ok((Self { root, default_config, tasks: RwLock::new(tasks) }, pending))
    }

    pub fn default_config(&self) -> &PipelineConfig {
        &self.default_config
    }

    fn dir(&self, id: &str) -> PathBuf {
        self.root.join(id)
    }

    pub fn get(&self, id: &str) -> Result<TaskHandle, StoreError> {
        self.tasks.read().get(id).cloned().ok_or_else(|| StoreError::NotFound(id.to_string()))
    }

    pub fn ids(&self) -> Vec<String> {
        self.tasks.read().keys().cloned().collect()
    }

    /// Persists the inputs and registers the task in `created` state.
    /// Returns the id and the pixel count (0 if the image did not decode,
    /// in which case the task is already `failed`).
    pub fn create(&self, new: NewTask) -> Result<(String, usize), StoreError> {
        let config = new.config.unwrap_or_else(|| self.default_config.clone());
        config.validate().map_err(|e| StoreError::BadRequest(e.to_string()))?;
        let id = uuid::Uuid::new_v4().simple().to_string();
        let dir = self.dir(&id);
        fs::create_dir_all(dir.join("input"))?;
        let mut inputs = vec![InputDigest::of("image", &new.image)];
        fs::write(dir.join(IMAGE), &new.image)?;
        for (name, path, bytes) in [("flow", FLOW, &new.flow), ("labels", LABELS, &new.labels), ("detections", DETECTIONS, &new.detections)] {
            if let Some(b) = bytes {
                fs::write(dir.join(path), b)?;
                inputs.push(InputDigest::of(name, b));
            }
        }
        let mut meta = TaskMeta {
            schema_version: API_SCHEMA_VERSION,
            id: id.clone(),
            name: new.name.unwrap_or_else(|| id.clone()),
            state: TaskState::Created,
            reason: None,
            created_at: chrono::Utc::now().to_rfc3339(),
            config,
            inputs,
            width: None,
            height: None,
        };
        let pixels = match decode_raster(&new.image) {
            Ok(img) => {
                meta.width = Some(img.width());
                meta.height = Some(img.height());
                img.width() * img.height()
            }
            Err(e) => {
                meta.state = TaskState::Failed;
                meta.reason = Some(format!("undecodable image: {e}"));
                0
            }
        };
        write_json(&dir.join("task.json"), &meta)?;
        self.tasks.write().insert(id.clone(), Arc::new(RwLock::new(Task { meta, live: None })));
        Ok((id, pixels))
    }

    /// Runs segmentation and calibration for a created task. Blocking; the
    /// task lock is only held to publish the outcome.
    pub fn process(&self, id: &str) -> Result<TaskStatus, StoreError> {
        let handle = self.get(id)?;
        let meta = {
            let mut t = handle.write();
            if matches!(t.meta.state, TaskState::Ready | TaskState::Failed) {
                return Ok(t.status());
            }
            t.meta.state = TaskState::Processing;
            write_json(&self.dir(id).join("task.json"), &t.meta)?;
            t.meta.clone()
        };
        let dir = self.dir(id);
        let outcome = run_pipeline(&dir, &meta);
        let mut t = handle.write();
        match outcome {
            Ok(live) => {
                t.meta.state = TaskState::Ready;
                let doc = {
                    t.live = Some(live);
                    t.results()?
                };
                write_json(&dir.join("results.json"), &doc)?;
            }
            Err(reason) => {
                tracing::info!(task = id, "processing failed: {reason}");
                t.meta.state = TaskState::Failed;
                t.meta.reason = Some(reason);
            }
        }
        write_json(&dir.join("task.json"), &t.meta)?;
        Ok(t.status())
    }

    /// Validates and applies one correction, then persists it.
    pub fn apply_correction(&self, id: &str, req: CorrectionRequest) -> Result<CorrectionResponse, StoreError> {
        let handle = self.get(id)?;
        let mut t = handle.write();
        let (name, report) = (t.meta.name.clone(), t.meta.config.report.clone());
        let live = t.live.as_ref().ok_or(StoreError::NotReady(t.meta.state))?;
        let mut edit = live.edit.clone();
        let effect = edit.apply(&req.action)?;
        let (instances, summary) = summarize_labels(&name, &edit.labels, live.scale.calibration.as_ref(), &live.filter, &report)?;
        let event = TaskEvent {
            version: live.version() + 1,
            author: req.author.unwrap_or_else(|| "anonymous".into()),
            timestamp: chrono::Utc::now().to_rfc3339(),
            change: Change::Correction { action: req.action },
        };
        append_event(&self.dir(id), &event)?;
        let live = t.live.as_mut().expect("checked above");
        live.edit = edit;
        live.events.push(event);
        live.instances = instances;
        live.summary = summary.clone();
        let version = live.version();
        write_json(&self.dir(id).join("results.json"), &t.results()?)?;
        Ok(CorrectionResponse { schema_version: API_SCHEMA_VERSION, id: id.to_string(), version, effect, summary })
    }

    /// Replaces the active filter; the instances themselves are untouched.
    pub fn set_filter(&self, id: &str, filter: FilterCriteria, author: Option<String>) -> Result<FilterResponse, StoreError> {
        filter.validate().map_err(StoreError::Filter)?;
        let handle = self.get(id)?;
        let mut t = handle.write();
        let (name, weighting) = (t.meta.name.clone(), t.meta.config.report.weighting);
        let live = t.live.as_ref().ok_or(StoreError::NotReady(t.meta.state))?;
        let (summary, _) = granula_core::report::sample_summary(&name, &live.instances, &filter, live.scale.calibration.as_ref(), weighting)?;
        let event = TaskEvent {
            version: live.version() + 1,
            author: author.unwrap_or_else(|| "anonymous".into()),
            timestamp: chrono::Utc::now().to_rfc3339(),
            change: Change::Filter { filter: filter.clone() },
        };
        append_event(&self.dir(id), &event)?;
        let live = t.live.as_mut().expect("checked above");
        live.events.push(event);
        live.filter = filter.clone();
        live.summary = summary.clone();
        let version = live.version();
        write_json(&self.dir(id).join("results.json"), &t.results()?)?;
        Ok(FilterResponse { schema_version: API_SCHEMA_VERSION, id: id.to_string(), version, filter, summary })
    }

    /// Original uploaded image bytes.
    pub fn image_bytes(&self, id: &str) -> Result<Vec<u8>, StoreError> {
        self.get(id)?;
        Ok(fs::read(self.dir(id).join(IMAGE))?)
    }
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<(), StoreError> {
    let tmp = path.with_extension("tmp");
    let mut bytes = serde_json::to_vec_pretty(value).map_err(internal)?;
    bytes.push(b'\n');
    fs::write(&tmp, bytes)?;
    fs::rename(tmp, path)?;
    Ok(())
}

fn append_event(dir: &Path, event: &TaskEvent) -> Result<(), StoreError> {
    let mut line = serde_json::to_vec(event).map_err(internal)?;
    line.push(b'\n');
    let mut f = OpenOptions::new().create(true).append(true).open(dir.join("events.jsonl"))?;
    f.write_all(&line)?;
    f.sync_data()?;
    Ok(())
}

fn read_optional(dir: &Path, path: &str) -> Result<Option<Vec<u8>>, String> {
    let p = dir.join(path);
    if p.is_file() {
        fs::read(p).map(Some).map_err(|e| e.to_string())
    } else {
        Ok(None)
    }
}

/// Segments and calibrates the stored inputs; errors become the task's
/// failure reason.
fn run_pipeline(dir: &Path, meta: &TaskMeta) -> Result<Live, String> {
    let image_bytes = fs::read(dir.join(IMAGE)).map_err(|e| e.to_string())?;
    let image = decode_raster(&image_bytes).map_err(|e| format!("undecodable image: {e}"))?;
    let source = if let Some(b) = read_optional(dir, FLOW)? {
        Some(SegmentationSource::Flow(decode_flow(&b).map_err(|e| format!("unreadable flow: {e}"))?))
    } else if let Some(b) = read_optional(dir, LABELS)? {
        Some(SegmentationSource::Labels(decode_labels_png(&b).map_err(|e| format!("unreadable labels: {e}"))?))
    } else {
        None
    };
    let detections = match read_optional(dir, DETECTIONS)? {
        Some(b) => parse_external(&String::from_utf8_lossy(&b)).map_err(|e| e.to_string())?,
        None => Vec::new(),
    };
    let base = segment_input(image.width(), image.height(), source.as_ref(), &meta.config.dynamics).map_err(|e| e.to_string())?;
    let scale = read_scale(&image, &detections, &meta.config.scalebar);
    let png = encode_labels_png(&base).map_err(|e| e.to_string())?;
    fs::write(dir.join("base_labels.png"), png).map_err(|e| e.to_string())?;
    write_json(&dir.join("scale.json"), &scale).map_err(|e| e.to_string())?;
    let _ = fs::remove_file(dir.join("events.jsonl"));
    replay(image, base, scale, Vec::new(), meta).map_err(|e| e.to_string())
}

fn load_live(dir: &Path, meta: &TaskMeta) -> Result<Live, StoreError> {
    let image = decode_raster(&fs::read(dir.join(IMAGE))?).map_err(internal)?;
    let base = decode_labels_png(&fs::read(dir.join("base_labels.png"))?).map_err(internal)?;
    let scale: ScaleStatus = serde_json::from_slice(&fs::read(dir.join("scale.json"))?).map_err(internal)?;
    let events = match fs::read_to_string(dir.join("events.jsonl")) {
        Ok(s) => s.lines().filter(|l| !l.trim().is_empty()).map(serde_json::from_str).collect::<Result<Vec<TaskEvent>, _>>().map_err(internal)?,
        Err(e) if e.kind() == std::io::ErrorKind::NotFound => Vec::new(),
        Err(e) => return Err(e.into()),
    };
    replay(image, base, scale, events, meta)
}

/// Rebuilds live state by applying `events` in order to the base labels.
fn replay(image: Raster8, base: LabelMap, scale: ScaleStatus, events: Vec<TaskEvent>, meta: &TaskMeta) -> Result<Live, StoreError> {
    let mut edit = EditState::new(base.clone());
    let mut filter = meta.config.filter.clone();
    for (k, ev) in events.iter().enumerate() {
        if ev.version != k as u64 + 2 {
            return Err(internal(format!("event log out of sequence at line {}", k + 1)));
        }
        match &ev.change {
            Change::Correction { action } => {
                edit.apply(action)?;
            }
            Change::Filter { filter: f } => filter = f.clone(),
        }
    }
    let (instances, summary) = summarize_labels(&meta.name, &edit.labels, scale.calibration.as_ref(), &filter, &meta.config.report)?;
    Ok(Live { image, base, scale, events, edit, filter, instances, summary })
}
