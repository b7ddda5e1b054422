//! The task server and the `task` client subcommands.

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::time::Duration;

use anyhow::Context;
use granula_client::{Client, TaskUpload};
use granula_core::corrections::CorrectionAction;
use granula_core::metrology::FilterCriteria;
use granula_core::pipeline::PipelineConfig;
use granula_service::{app, serve, ServiceConfig};
use serde::Serialize;

use crate::print_json;

#[derive(Debug, Serialize)]
struct Bound {
    url: String,
    port: u16,
}

async fn shutdown_signal() {
    let ctrl_c = async {
        let _ = tokio::signal::ctrl_c().await;
    };
    #[cfg(unix)]
    let term = async {
        match tokio::signal::unix::signal(tokio::signal::unix::SignalKind::terminate()) {
            Ok(mut s) => {
                s.recv().await;
            }
            Err(_) => std::future::pending::<()>().await,
        }
    };
    #[cfg(not(unix))]
    let term = std::future::pending::<()>();
    tokio::select! {
        _ = ctrl_c => {},
        _ = term => {},
    }
    tracing::info!("shutting down");
}

/// Binds, prints `{"url", "port"}` on stdout and serves until SIGINT/SIGTERM.
pub async fn run_server(host: &str, port: u16, data_dir: &Path, cfg: PipelineConfig) -> anyhow::Result<()> {
    let mut sc = ServiceConfig::new(data_dir);
    sc.pipeline = cfg;
    let (router, _) = app(&sc)?;
    let listener = tokio::net::TcpListener::bind((host, port)).await.with_context(|| format!("binding {host}:{port}"))?;
    let addr = listener.local_addr()?;
    // one line, so callers can read it before the server exits
    let mut out = std::io::stdout().lock();
    serde_json::to_writer(&mut out, &Bound { url: format!("http://{addr}"), port: addr.port() })?;
    out.write_all(b"\n")?;
    out.flush()?;
    drop(out);
    tracing::info!(%addr, data_dir = %data_dir.display(), "serving");
    serve(listener, router, shutdown_signal()).await?;
    Ok(())
}

#[derive(Debug, Clone)]
pub enum TaskOp {
    Create { image: PathBuf, flow: Option<PathBuf>, labels: Option<PathBuf>, detections: Option<PathBuf>, name: Option<String>, wait: bool },
    List,
    Status { id: String },
    Results { id: String },
    Filter { id: String, filter: FilterCriteria },
    Correct { id: String, action: String, author: Option<String> },
    Events { id: String },
    Report { id: String, out: PathBuf },
}

fn opt_read(p: &Option<PathBuf>) -> anyhow::Result<Option<Vec<u8>>> {
    p.as_ref().map(|p| fs::read(p).with_context(|| format!("reading {}", p.display()))).transpose()
}

/// Runs one client operation and prints its JSON response.
pub async fn run_task(server: &str, op: TaskOp, params: Option<PipelineConfig>) -> anyhow::Result<()> {
    let c = Client::new(server);
    match op {
        TaskOp::Create { image, flow, labels, detections, name, wait } => {
            let name = name.or_else(|| image.file_stem().and_then(|s| s.to_str()).map(str::to_string));
            let up = TaskUpload {
                name,
                image: fs::read(&image).with_context(|| format!("reading {}", image.display()))?,
                flow: opt_read(&flow)?,
                labels: opt_read(&labels)?,
                detections: opt_read(&detections)?,
                params,
            };
            let mut st = c.create_task(up).await?;
            if wait {
                st = c.wait_settled(&st.id, Duration::from_secs(600)).await?;
            }
            print_json(&st)
        }
        TaskOp::List => print_json(&c.list_tasks().await?),
        TaskOp::Status { id } => print_json(&c.task(&id).await?),
        TaskOp::Results { id } => print_json(&c.results(&id).await?),
        TaskOp::Filter { id, filter } => print_json(&c.set_filter(&id, &filter).await?),
        TaskOp::Correct { id, action, author } => {
            let action: CorrectionAction = serde_json::from_str(&action).context("parsing correction action")?;
            print_json(&c.correct(&id, action, author.as_deref()).await?)
        }
        TaskOp::Events { id } => print_json(&c.events(&id).await?),
        TaskOp::Report { id, out } => {
            let html = c.report_html(&id).await?;
            let (_, json) = c.report_json(&id).await?;
            let json_path = out.with_extension("json");
            fs::write(&out, html).with_context(|| format!("writing {}", out.display()))?;
            fs::write(&json_path, json).with_context(|| format!("writing {}", json_path.display()))?;
            print_json(&crate::analyze::ReportPaths { html: out, json: json_path })
        }
    }
}
