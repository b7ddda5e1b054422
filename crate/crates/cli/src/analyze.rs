//! Batch analysis of image files and combined reports.

use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context};
use granula_core::api::ResultsDocument;
use granula_core::imagecore::{decode_flow, decode_labels_png, decode_raster};
use granula_core::metrology::{FilterCriteria, InstanceMetrics};
use granula_core::pipeline::{analyze, Analysis, PipelineConfig, ScaleStatus, SegmentationSource};
use granula_core::report::{build_report, render_report, InputDigest, Provenance, ReportDocument, SampleInput, SampleSummary};
use granula_core::scalebar::{parse_external, ScaleCalibration};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

pub const OUTPUT_SCHEMA_VERSION: u32 = 1;

const IMAGE_EXTS: [&str; 6] = ["png", "jpg", "jpeg", "tif", "tiff", "bmp"];

/// Where to look for per-image side files. Unset directories mean "next to
/// the image".
#[derive(Debug, Clone, Default)]
pub struct SidecarDirs {
    pub flow: Option<PathBuf>,
    pub labels: Option<PathBuf>,
    pub detections: Option<PathBuf>,
}

fn is_sidecar(name: &str) -> bool {
    name.ends_with(".labels.png")
}

fn is_image(p: &Path) -> bool {
    let name = p.file_name().and_then(|n| n.to_str()).unwrap_or("");
    let ext = p.extension().and_then(|e| e.to_str()).map(str::to_ascii_lowercase).unwrap_or_default();
    IMAGE_EXTS.contains(&ext.as_str()) && !is_sidecar(name)
}

/// Expands directories (non-recursively, sorted) and keeps files as given.
pub fn collect_images(inputs: &[PathBuf]) -> anyhow::Result<Vec<PathBuf>> {
    let mut out = Vec::new();
    for p in inputs {
        if p.is_dir() {
            let mut found: Vec<PathBuf> = fs::read_dir(p)
                .with_context(|| format!("reading {}", p.display()))?
                .filter_map(|e| e.ok().map(|e| e.path()))
                .filter(|q| q.is_file() && is_image(q))
                .collect();
            found.sort();
            out.extend(found);
        } else {
            out.push(p.clone());
        }
    }
    Ok(out)
}

fn stem(image: &Path) -> String {
    image.file_stem().and_then(|s| s.to_str()).unwrap_or("").to_string()
}

fn first_existing(dir: &Path, names: &[String]) -> Option<PathBuf> {
    names.iter().map(|n| dir.join(n)).find(|p| p.is_file())
}

#[derive(Debug, Clone, Default, Serialize)]
pub struct Sidecars {
    pub flow: Option<PathBuf>,
    pub labels: Option<PathBuf>,
    pub detections: Option<PathBuf>,
}

pub fn find_sidecars(image: &Path, dirs: &SidecarDirs) -> Sidecars {
    let s = stem(image);
    let here = image.parent().map(Path::to_path_buf).unwrap_or_default();
    let look = |dir: &Option<PathBuf>, names: Vec<String>, extra: String| match dir {
        Some(d) => first_existing(d, &[names.clone(), vec![extra]].concat()),
        None => first_existing(&here, &names),
    };
    Sidecars {
        flow: look(&dirs.flow, vec![format!("{s}.uafl"), format!("{s}.flow.uafl")], format!("{s}.flow")),
        labels: look(&dirs.labels, vec![format!("{s}.labels.png")], format!("{s}.png")),
        detections: look(&dirs.detections, vec![format!("{s}.detections.json")], format!("{s}.json")),
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct FileResult {
    pub input: PathBuf,
    pub ok: bool,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub source: Option<&'static str>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub analysis: Option<Analysis>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
    #[serde(skip)]
    pub digests: Vec<InputDigest>,
}

fn read(p: &Path) -> anyhow::Result<Vec<u8>> {
    fs::read(p).with_context(|| format!("reading {}", p.display()))
}

fn analyze_one(image: &Path, dirs: &SidecarDirs, cfg: &PipelineConfig) -> anyhow::Result<(&'static str, Analysis, Vec<InputDigest>)> {
    let name = stem(image);
    let bytes = read(image)?;
    let raster = decode_raster(&bytes).with_context(|| format!("decoding {}", image.display()))?;
    let mut digests = vec![InputDigest::of(&format!("{name}:image"), &bytes)];
    let side = find_sidecars(image, dirs);
    let (tag, source) = if let Some(p) = &side.flow {
        let b = read(p)?;
        digests.push(InputDigest::of(&format!("{name}:flow"), &b));
        ("flow", Some(SegmentationSource::Flow(decode_flow(&b).with_context(|| format!("decoding {}", p.display()))?)))
    } else if let Some(p) = &side.labels {
        let b = read(p)?;
        digests.push(InputDigest::of(&format!("{name}:labels"), &b));
        ("labels", Some(SegmentationSource::Labels(decode_labels_png(&b).with_context(|| format!("decoding {}", p.display()))?)))
    } else {
        ("none", None)
    };
    let detections = match &side.detections {
        Some(p) => {
            let b = read(p)?;
            digests.push(InputDigest::of(&format!("{name}:detections"), &b));
            parse_external(std::str::from_utf8(&b).context("detections are not UTF-8")?)?
        }
        None => Vec::new(),
    };
    let a = analyze(&name, &raster, source.as_ref(), &detections, None, cfg)?;
    Ok((tag, a, digests))
}

/// Analyzes every image; failures are recorded per file. Output order
/// follows input order whatever the thread count.
pub fn analyze_files(images: &[PathBuf], dirs: &SidecarDirs, cfg: &PipelineConfig) -> Vec<FileResult> {
    images
        .par_iter()
        .map(|img| match analyze_one(img, dirs, cfg) {
            Ok((tag, a, digests)) => FileResult { input: img.clone(), ok: true, source: Some(tag), analysis: Some(a), error: None, digests },
            Err(e) => {
                tracing::warn!(input = %img.display(), "analysis failed: {e:#}");
                FileResult { input: img.clone(), ok: false, source: None, analysis: None, error: Some(format!("{e:#}")), digests: Vec::new() }
            }
        })
        .collect()
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ReportPaths {
    pub html: PathBuf,
    pub json: PathBuf,
}

#[derive(Debug, Serialize)]
pub struct AnalyzeOutput {
    pub schema_version: u32,
    pub results: Vec<FileResult>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub report: Option<ReportPaths>,
}

/// The parts of a saved analysis a report needs.
#[derive(Debug, Clone, Deserialize)]
pub struct SavedAnalysis {
    pub name: String,
    pub scale: ScaleStatus,
    pub instances: Vec<InstanceMetrics>,
    pub summary: SampleSummary,
}

#[derive(Debug, Deserialize)]
struct SavedFile {
    #[serde(default)]
    analysis: Option<SavedAnalysis>,
}

#[derive(Debug, Deserialize)]
struct SavedOutput {
    results: Vec<SavedFile>,
}

/// One sample for a combined report.
#[derive(Debug, Clone)]
pub struct Sample {
    pub name: String,
    pub metrics: Vec<InstanceMetrics>,
    pub calibration: Option<ScaleCalibration>,
    pub filter: FilterCriteria,
}

impl From<SavedAnalysis> for Sample {
    fn from(a: SavedAnalysis) -> Self {
        Self { name: a.name, metrics: a.instances, calibration: a.scale.calibration, filter: a.summary.filter }
    }
}

impl From<&Analysis> for Sample {
    fn from(a: &Analysis) -> Self {
        Self { name: a.name.clone(), metrics: a.instances.clone(), calibration: a.scale.calibration, filter: a.summary.filter.clone() }
    }
}

/// Successful samples from an `analyze` output file.
pub fn load_analyze_output(path: &Path) -> anyhow::Result<Vec<Sample>> {
    let out: SavedOutput = serde_json::from_slice(&read(path)?).with_context(|| format!("parsing {}", path.display()))?;
    Ok(out.results.into_iter().filter_map(|r| r.analysis).map(Sample::from).collect())
}

/// Current state of a service task directory.
pub fn load_task_dir(dir: &Path) -> anyhow::Result<Sample> {
    let doc: ResultsDocument =
        serde_json::from_slice(&read(&dir.join("results.json"))?).with_context(|| format!("parsing {}/results.json", dir.display()))?;
    let name = fs::read(dir.join("task.json"))
        .ok()
        .and_then(|b| serde_json::from_slice::<serde_json::Value>(&b).ok())
        .and_then(|v| v.get("name").and_then(|n| n.as_str()).map(str::to_string))
        .unwrap_or_else(|| doc.id.clone());
    Ok(Sample { name, metrics: doc.instances.into_iter().map(|i| i.metrics).collect(), calibration: doc.scale.calibration, filter: doc.filter })
}

pub fn combined_report(samples: &[Sample], digests: Vec<InputDigest>, cfg: &PipelineConfig) -> anyhow::Result<ReportDocument> {
    if samples.is_empty() {
        bail!("no successful samples to report on");
    }
    let inputs: Vec<SampleInput> = samples
        .iter()
        .map(|s| SampleInput { name: &s.name, metrics: &s.metrics, calibration: s.calibration.as_ref(), filter: &s.filter })
        .collect();
    let params = serde_json::to_value(cfg)?;
    Ok(build_report(&inputs, &cfg.report, Provenance::new(digests, params, None))?)
}

/// Writes the HTML report and its JSON twin (same stem, `.json`).
pub fn write_report(doc: &ReportDocument, html_path: &Path) -> anyhow::Result<ReportPaths> {
    let r = render_report(doc);
    let json_path = html_path.with_extension("json");
    if json_path == html_path {
        bail!("report path must not end in .json");
    }
    if let Some(d) = html_path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(d)?;
    }
    fs::write(html_path, r.html).with_context(|| format!("writing {}", html_path.display()))?;
    fs::write(&json_path, r.json).with_context(|| format!("writing {}", json_path.display()))?;
    Ok(ReportPaths { html: html_path.to_path_buf(), json: json_path })
}
