//! JSON documents exchanged with the task service. Every top-level document
//! carries `schema_version`.

use serde::{Deserialize, Serialize};

use crate::corrections::{CorrectionAction, EditEffect};
use crate::imagecore::RunLengthMask;
use crate::metrology::{FilterCriteria, InstanceMetrics, Weighting};
use crate::pipeline::ScaleStatus;
use crate::report::SampleSummary;
use crate::scalebar::BBox;

pub const API_SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TaskState {
    Created,
    Processing,
    Ready,
    Failed,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TaskStatus {
    pub schema_version: u32,
    pub id: String,
    pub name: String,
    pub state: TaskState,
    /// 0 until ready, then 1 plus the number of accepted mutations.
    pub version: u64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub reason: Option<String>,
    pub created_at: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub width: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub height: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub instance_count: Option<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InstanceRecord {
    pub id: u32,
    pub bbox: BBox,
    pub rle: RunLengthMask,
    pub passes_filter: bool,
    pub metrics: InstanceMetrics,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResultsDocument {
    pub schema_version: u32,
    pub id: String,
    pub version: u64,
    pub width: usize,
    pub height: usize,
    pub scale: ScaleStatus,
    pub filter: FilterCriteria,
    pub weighting: Weighting,
    /// Ordered by id.
    pub instances: Vec<InstanceRecord>,
    pub summary: SampleSummary,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FilterResponse {
    pub schema_version: u32,
    pub id: String,
    pub version: u64,
    pub filter: FilterCriteria,
    pub summary: SampleSummary,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CorrectionRequest {
    pub action: CorrectionAction,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub author: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CorrectionResponse {
    pub schema_version: u32,
    pub id: String,
    pub version: u64,
    pub effect: EditEffect,
    pub summary: SampleSummary,
}

/// One line of a task's mutation log.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TaskEvent {
    /// Task version this event produced.
    pub version: u64,
    pub author: String,
    pub timestamp: String,
    pub change: Change,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum Change {
    Correction { action: CorrectionAction },
    Filter { filter: FilterCriteria },
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ErrorBody {
    pub code: String,
    pub message: String,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct HistogramQuery {
    /// Metric name; defaults to the physical diameter when calibrated.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub quantity: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub weighting: Option<Weighting>,
    /// Takes precedence over `bins`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub bin_width: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub bins: Option<usize>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScatterQuery {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub x: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub y: Option<String>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BoxQuery {
    /// Comma-separated task ids.
    pub tasks: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub quantity: Option<String>,
}
