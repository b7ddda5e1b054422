//! Thin async client for the task service. Every method maps to one
//! endpoint and returns the service's own document types.

use std::time::{Duration, Instant};

use granula_core::api::{
    BoxQuery, CorrectionRequest, CorrectionResponse, ErrorBody, FilterResponse, HistogramQuery, ResultsDocument, ScatterQuery, TaskEvent,
    TaskState, TaskStatus,
};
use granula_core::corrections::CorrectionAction;
use granula_core::metrology::FilterCriteria;
use granula_core::pipeline::PipelineConfig;
use granula_core::report::{ChartData, ReportDocument};
use reqwest::multipart::{Form, Part};
use reqwest::{RequestBuilder, Response};
use serde::de::DeserializeOwned;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum ClientError {
    #[error("http: {0}")]
    Http(#[from] reqwest::Error),
    #[error("service returned {status}: {} ({})", .body.message, .body.code)]
    Api { status: u16, body: ErrorBody },
    #[error("unexpected response: {0}")]
    Decode(String),
    #[error("task {id} not ready after {waited:?} (state {state:?})")]
    Timeout { id: String, waited: Duration, state: TaskState },
}

impl ClientError {
    /// Error code from the service, if it sent one.
    pub fn code(&self) -> Option<&str> {
        match self {
            Self::Api { body, .. } => Some(&body.code),
            _ => None,
        }
    }
}

/// Inputs for `POST /tasks`.
#[derive(Debug, Clone, Default)]
pub struct TaskUpload {
    pub name: Option<String>,
    pub image: Vec<u8>,
    /// UAFL bytes.
    pub flow: Option<Vec<u8>>,
    /// 16-bit label PNG.
    pub labels: Option<Vec<u8>>,
    /// Detections JSON.
    pub detections: Option<Vec<u8>>,
    pub params: Option<PipelineConfig>,
}

#[derive(Debug, Clone)]
pub struct Client {
    base: String,
    http: reqwest::Client,
}

impl Client {
    /// `base` is like `http://127.0.0.1:8080`.
    pub fn new(base: impl Into<String>) -> Self {
        Self { base: base.into().trim_end_matches('/').to_string(), http: reqwest::Client::new() }
    }

    pub fn base(&self) -> &str {
        &self.base
    }

    fn url(&self, path: &str) -> String {
        format!("{}{}", self.base, path)
    }

    async fn send(req: RequestBuilder) -> Result<Response, ClientError> {
        let resp = req.send().await?;
        let status = resp.status();
        if status.is_success() {
            return Ok(resp);
        }
        let bytes = resp.bytes().await?;
        let body = serde_json::from_slice(&bytes).unwrap_or_else(|_| ErrorBody { code: "http".into(), message: String::from_utf8_lossy(&bytes).into_owned() });
        Err(ClientError::Api { status: status.as_u16(), body })
    }

    async fn json<T: DeserializeOwned>(req: RequestBuilder) -> Result<T, ClientError> {
        let bytes = Self::send(req).await?.bytes().await?;
        serde_json::from_slice(&bytes).map_err(|e| ClientError::Decode(e.to_string()))
    }

    async fn raw(req: RequestBuilder) -> Result<Vec<u8>, ClientError> {
        Ok(Self::send(req).await?.bytes().await?.to_vec())
    }

    pub async fn health(&self) -> Result<(), ClientError> {
        Self::send(self.http.get(self.url("/health"))).await.map(|_| ())
    }

    pub async fn create_task(&self, up: TaskUpload) -> Result<TaskStatus, ClientError> {
        let file_name = up.name.clone().unwrap_or_else(|| "image".into());
        let mut form = Form::new().part("image", Part::bytes(up.image).file_name(file_name));
        if let Some(n) = up.name {
            form = form.text("name", n);
        }
        for (field, bytes) in [("flow", up.flow), ("labels", up.labels), ("detections", up.detections)] {
            if let Some(b) = bytes {
                form = form.part(field, Part::bytes(b).file_name(field));
            }
        }
        if let Some(p) = up.params {
            form = form.text("params", serde_json::to_string(&p).map_err(|e| ClientError::Decode(e.to_string()))?);
        }
        Self::json(self.http.post(self.url("/tasks")).multipart(form)).await
    }

    pub async fn list_tasks(&self) -> Result<Vec<TaskStatus>, ClientError> {
        Self::json(self.http.get(self.url("/tasks"))).await
    }

    pub async fn task(&self, id: &str) -> Result<TaskStatus, ClientError> {
        Self::json(self.http.get(self.url(&format!("/tasks/{id}")))).await
    }

    /// Polls until the task leaves `created`/`processing`.
    pub async fn wait_settled(&self, id: &str, timeout: Duration) -> Result<TaskStatus, ClientError> {
        let start = Instant::now();
        loop {
            let st = self.task(id).await?;
            if matches!(st.state, TaskState::Ready | TaskState::Failed) {
                return Ok(st);
            }
            if start.elapsed() > timeout {
                return Err(ClientError::Timeout { id: id.into(), waited: start.elapsed(), state: st.state });
            }
            tokio::time::sleep(Duration::from_millis(100)).await;
        }
    }

    pub async fn results(&self, id: &str) -> Result<ResultsDocument, ClientError> {
        Self::json(self.http.get(self.url(&format!("/tasks/{id}/results")))).await
    }

    /// Results exactly as serialized by the service.
    pub async fn results_bytes(&self, id: &str) -> Result<Vec<u8>, ClientError> {
        Self::raw(self.http.get(self.url(&format!("/tasks/{id}/results")))).await
    }

    pub async fn set_filter(&self, id: &str, filter: &FilterCriteria) -> Result<FilterResponse, ClientError> {
        Self::json(self.http.put(self.url(&format!("/tasks/{id}/filter"))).json(filter)).await
    }

    pub async fn correct(&self, id: &str, action: CorrectionAction, author: Option<&str>) -> Result<CorrectionResponse, ClientError> {
        let req = CorrectionRequest { action, author: author.map(str::to_string) };
        Self::json(self.http.post(self.url(&format!("/tasks/{id}/corrections"))).json(&req)).await
    }

    pub async fn events(&self, id: &str) -> Result<Vec<TaskEvent>, ClientError> {
        Self::json(self.http.get(self.url(&format!("/tasks/{id}/events")))).await
    }

    pub async fn report_html(&self, id: &str) -> Result<String, ClientError> {
        let bytes = Self::raw(self.http.get(self.url(&format!("/tasks/{id}/report")))).await?;
        String::from_utf8(bytes).map_err(|e| ClientError::Decode(e.to_string()))
    }

    /// Parsed report and the raw JSON text.
    pub async fn report_json(&self, id: &str) -> Result<(ReportDocument, String), ClientError> {
        let bytes = Self::raw(self.http.get(self.url(&format!("/tasks/{id}/report.json")))).await?;
        let text = String::from_utf8(bytes).map_err(|e| ClientError::Decode(e.to_string()))?;
        let doc = serde_json::from_str(&text).map_err(|e| ClientError::Decode(e.to_string()))?;
        Ok((doc, text))
    }

    pub async fn image(&self, id: &str) -> Result<Vec<u8>, ClientError> {
        Self::raw(self.http.get(self.url(&format!("/tasks/{id}/image")))).await
    }

    pub async fn overlay_png(&self, id: &str) -> Result<Vec<u8>, ClientError> {
        Self::raw(self.http.get(self.url(&format!("/tasks/{id}/overlay.png")))).await
    }

    pub async fn labels_png(&self, id: &str) -> Result<Vec<u8>, ClientError> {
        Self::raw(self.http.get(self.url(&format!("/tasks/{id}/labels.png")))).await
    }

    pub async fn histogram(&self, id: &str, q: &HistogramQuery) -> Result<ChartData, ClientError> {
        Self::json(self.http.get(self.url(&format!("/tasks/{id}/charts/histogram"))).query(q)).await
    }

    pub async fn scatter(&self, id: &str, q: &ScatterQuery) -> Result<ChartData, ClientError> {
        Self::json(self.http.get(self.url(&format!("/tasks/{id}/charts/scatter"))).query(q)).await
    }

    pub async fn box_chart(&self, ids: &[&str], quantity: Option<&str>) -> Result<ChartData, ClientError> {
        let q = BoxQuery { tasks: ids.join(","), quantity: quantity.map(str::to_string) };
        Self::json(self.http.get(self.url("/charts/box")).query(&q)).await
    }
}
