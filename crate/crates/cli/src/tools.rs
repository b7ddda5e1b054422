//! In-process subcommands: segmentation, flow generation, scale bars,
//! evaluation, synthesis and benchmarking.

use std::fs;
use std::path::{Path, PathBuf};
use std::time::Instant;

use anyhow::{bail, Context};
use granula_core::dynamics::segment;
use granula_core::evalkit::{evaluate, scalebar_report, score_scalebar, summarize_by_density, ScaleBarReport, SegEvalSummary};
use granula_core::flowgen::labels_to_flows;
use granula_core::imagecore::{read_flow_file, read_labels_png, read_raster, write_flow_file, write_labels_png, write_raster, LabelMap};
use granula_core::pipeline::{read_scale, PipelineConfig, ScaleStatus};
use granula_core::scalebar::{parse_external, LengthUnit};
use granula_core::synthgen::{gen_corpus, gen_micrograph, gen_scene, CorpusTemplate, ItemTruth, Manifest, MicrographSpec, ScaleBarSpec, SceneSpec, Shape};
use rayon::prelude::*;
use serde::Serialize;

#[derive(Debug, Serialize)]
pub struct SegmentOutput {
    pub width: usize,
    pub height: usize,
    pub instance_count: usize,
    pub out: PathBuf,
}

pub fn segment_file(flow: &Path, out: &Path, cfg: &PipelineConfig) -> anyhow::Result<SegmentOutput> {
    let f = read_flow_file(flow).with_context(|| format!("reading {}", flow.display()))?;
    let labels = segment(&f, &cfg.dynamics)?;
    write_labels_png(&labels, out).with_context(|| format!("writing {}", out.display()))?;
    Ok(SegmentOutput { width: labels.width(), height: labels.height(), instance_count: labels.instance_count(), out: out.to_path_buf() })
}

#[derive(Debug, Serialize)]
pub struct FlowGenOutput {
    pub width: usize,
    pub height: usize,
    pub instance_count: usize,
    pub out: PathBuf,
}

pub fn flow_gen_file(labels: &Path, out: &Path, cfg: &PipelineConfig) -> anyhow::Result<FlowGenOutput> {
    let lm = read_labels_png(labels).with_context(|| format!("reading {}", labels.display()))?;
    let f = labels_to_flows(&lm, &cfg.flowgen)?;
    write_flow_file(&f, out).with_context(|| format!("writing {}", out.display()))?;
    Ok(FlowGenOutput { width: lm.width(), height: lm.height(), instance_count: lm.instance_count(), out: out.to_path_buf() })
}

pub fn scalebar_file(image: &Path, detections: Option<&Path>, cfg: &PipelineConfig) -> anyhow::Result<ScaleStatus> {
    let img = read_raster(image).with_context(|| format!("reading {}", image.display()))?;
    let dets = match detections {
        Some(p) => parse_external(&fs::read_to_string(p).with_context(|| format!("reading {}", p.display()))?)?,
        None => Vec::new(),
    };
    Ok(read_scale(&img, &dets, &cfg.scalebar))
}

fn png_names(dir: &Path) -> anyhow::Result<Vec<String>> {
    let mut names: Vec<String> = fs::read_dir(dir)
        .with_context(|| format!("reading {}", dir.display()))?
        .filter_map(|e| e.ok())
        .filter_map(|e| e.file_name().into_string().ok())
        .filter(|n| n.ends_with(".png"))
        .collect();
    names.sort();
    Ok(names)
}

#[derive(Debug, Serialize)]
pub struct SegEvalOutput {
    #[serde(flatten)]
    pub summary: SegEvalSummary,
    /// Ground-truth files with no prediction; scored as empty predictions.
    pub missing: Vec<String>,
}

/// Scores every label PNG in `gt` against the same file name in `pred`.
pub fn eval_seg(pred: &Path, gt: &Path, threshold: f64) -> anyhow::Result<SegEvalOutput> {
    let names = png_names(gt)?;
    if names.is_empty() {
        bail!("no label PNGs in {}", gt.display());
    }
    let loaded: Vec<(String, LabelMap, LabelMap, bool)> = names
        .par_iter()
        .map(|n| -> anyhow::Result<_> {
            let g = read_labels_png(gt.join(n)).with_context(|| format!("reading {}", gt.join(n).display()))?;
            let pp = pred.join(n);
            if pp.is_file() {
                Ok((n.clone(), read_labels_png(&pp).with_context(|| format!("reading {}", pp.display()))?, g, false))
            } else {
                let empty = LabelMap::new(g.width(), g.height());
                Ok((n.clone(), empty, g, true))
            }
        })
        .collect::<anyhow::Result<_>>()?;
    let missing = loaded.iter().filter(|t| t.3).map(|t| t.0.clone()).collect();
    let data: Vec<(String, LabelMap, LabelMap)> = loaded.into_iter().map(|(n, p, g, _)| (n, p, g)).collect();
    Ok(SegEvalOutput { summary: summarize_by_density(evaluate(&data, threshold)?), missing })
}

/// Reads every image of a scale-bar corpus, with its true label text
/// standing in for OCR.
pub fn eval_scalebar(corpus: &Path, cfg: &PipelineConfig) -> anyhow::Result<ScaleBarReport> {
    let mpath = corpus.join("manifest.json");
    let m: Manifest = serde_json::from_slice(&fs::read(&mpath).with_context(|| format!("reading {}", mpath.display()))?)?;
    let results = m
        .items
        .par_iter()
        .map(|it| -> anyhow::Result<_> {
            let ItemTruth::Scalebar(t) = &it.truth else { bail!("{} is not a scale-bar corpus", mpath.display()) };
            let img = read_raster(corpus.join(&it.image)).with_context(|| format!("reading {}", it.image))?;
            Ok(score_scalebar(&img, t, &cfg.scalebar))
        })
        .collect::<anyhow::Result<Vec<_>>>()?;
    Ok(scalebar_report(&results)?)
}

#[derive(Debug, Clone)]
pub struct SceneArgs {
    pub width: usize,
    pub height: usize,
    pub particles: usize,
    pub shape: Shape,
    pub mu: f64,
    pub sigma: f64,
    pub min_diameter: Option<f64>,
    pub max_diameter: Option<f64>,
}

impl SceneArgs {
    pub fn spec(&self, seed: u64) -> SceneSpec {
        SceneSpec {
            min_diameter: self.min_diameter,
            max_diameter: self.max_diameter,
            ..SceneSpec::new(self.width, self.height, self.particles, self.shape, self.mu, self.sigma, seed)
        }
    }
}

#[derive(Debug, Serialize)]
pub struct CorpusOutput {
    pub out: PathBuf,
    pub count: usize,
    pub manifest: PathBuf,
}

/// Scene corpus; with `flows`, each image also gets its ground-truth flow
/// (`NNNNN.uafl`) so the directory can be fed to `analyze` directly.
pub fn synth_scenes(args: &SceneArgs, n: usize, seed: u64, flows: bool, out: &Path, cfg: &PipelineConfig) -> anyhow::Result<CorpusOutput> {
    let m = gen_corpus(&CorpusTemplate::Scene(args.spec(0)), n, seed, out)?;
    if flows {
        m.items.par_iter().try_for_each(|it| -> anyhow::Result<()> {
            let lm = read_labels_png(out.join(it.labels.as_ref().expect("scene items carry labels")))?;
            let f = labels_to_flows(&lm, &cfg.flowgen)?;
            write_flow_file(&f, out.join(Path::new(&it.image).with_extension("uafl")))?;
            Ok(())
        })?;
    }
    Ok(CorpusOutput { out: out.to_path_buf(), count: m.count, manifest: out.join("manifest.json") })
}

pub fn synth_scalebars(width: usize, height: usize, n: usize, seed: u64, out: &Path) -> anyhow::Result<CorpusOutput> {
    let spec = ScaleBarSpec { width, height, ..Default::default() };
    let m = gen_corpus(&CorpusTemplate::Scalebar(spec), n, seed, out)?;
    Ok(CorpusOutput { out: out.to_path_buf(), count: m.count, manifest: out.join("manifest.json") })
}

#[derive(Debug, Serialize)]
pub struct SampleOutput {
    pub image: PathBuf,
    pub flow: PathBuf,
    pub labels: PathBuf,
    pub detections: PathBuf,
    pub instance_count: usize,
    pub nm_per_pixel: f64,
}

/// A calibrated micrograph with every side file `analyze` looks for.
pub fn synth_sample(
    args: &SceneArgs,
    seed: u64,
    bar_length_px: usize,
    value: u32,
    unit: LengthUnit,
    name: &str,
    out: &Path,
    cfg: &PipelineConfig,
) -> anyhow::Result<SampleOutput> {
    let spec = MicrographSpec { scene: SceneSpec { height: args.height.saturating_sub(granula_core::synthgen::STRIP_HEIGHT), ..args.spec(seed) }, bar_length_px, value, unit };
    let m = gen_micrograph(&spec)?;
    fs::create_dir_all(out)?;
    let p = |suffix: &str| out.join(format!("{name}{suffix}"));
    write_raster(&m.image, p(".png"))?;
    write_labels_png(&m.truth.label_map, p(".labels.png"))?;
    write_flow_file(&labels_to_flows(&m.truth.label_map, &cfg.flowgen)?, p(".uafl"))?;
    fs::write(p(".detections.json"), serde_json::to_vec_pretty(&m.detections)?)?;
    Ok(SampleOutput {
        image: p(".png"),
        flow: p(".uafl"),
        labels: p(".labels.png"),
        detections: p(".detections.json"),
        instance_count: m.truth.label_map.instance_count(),
        nm_per_pixel: value as f64 * unit.in_nm() / bar_length_px as f64,
    })
}

#[derive(Debug, Serialize)]
pub struct BenchOutput {
    pub width: usize,
    pub height: usize,
    pub instances: usize,
    pub threads: usize,
    pub synth_s: f64,
    pub flowgen_s: f64,
    pub segment_s: f64,
    pub ap50: f64,
}

/// Times one synthetic round trip: scene, flows from labels, segmentation.
pub fn bench(args: &SceneArgs, seed: u64, cfg: &PipelineConfig) -> anyhow::Result<BenchOutput> {
    let t = Instant::now();
    let (_, truth) = gen_scene(&args.spec(seed))?;
    let synth_s = t.elapsed().as_secs_f64();
    let t = Instant::now();
    let flow = labels_to_flows(&truth.label_map, &cfg.flowgen)?;
    let flowgen_s = t.elapsed().as_secs_f64();
    let t = Instant::now();
    let pred = segment(&flow, &cfg.dynamics)?;
    let segment_s = t.elapsed().as_secs_f64();
    let ap50 = granula_core::evalkit::average_precision(&pred, &truth.label_map, 0.5)?;
    Ok(BenchOutput {
        width: args.width,
        height: args.height,
        instances: truth.label_map.instance_count(),
        threads: rayon::current_num_threads(),
        synth_s,
        flowgen_s,
        segment_s,
        ap50,
    })
}
