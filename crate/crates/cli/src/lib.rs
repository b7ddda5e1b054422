//! `granula` command line. JSON results go to stdout, logs to stderr.
//!
//! Exit codes: 0 success, 1 failure or partial failure, 2 usage or config error.

pub mod analyze;
pub mod config;
pub mod remote;
pub mod tools;

use std::io::Write;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use granula_core::metrology::FilterCriteria;
use granula_core::pipeline::PipelineConfig;
use granula_core::scalebar::LengthUnit;
use granula_core::synthgen::Shape;
use serde::Serialize;

pub const THREADS_ENV: &str = "GRANULA_THREADS";
pub const LOG_ENV: &str = "GRANULA_LOG";

#[derive(Debug, Parser)]
#[command(name = "granula", version, about = "Particle segmentation, scale-bar calibration and size statistics for micrographs")]
pub struct Cli {
    /// TOML config file.
    #[arg(long, global = true, value_name = "FILE")]
    pub config: Option<PathBuf>,
    /// Override one config key, e.g. `--set filter.exclude_edge=true`. Repeatable.
    #[arg(long = "set", global = true, value_name = "KEY=VALUE")]
    pub overrides: Vec<String>,
    /// Worker threads. Falls back to the config, then GRANULA_THREADS.
    #[arg(long, global = true)]
    pub threads: Option<usize>,
    /// Print the effective config as TOML and exit.
    #[arg(long)]
    pub dump_config: bool,
    #[command(subcommand)]
    pub command: Option<Command>,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Analyze images (or directories of images) with their side files.
    ///
    /// For `X.png` the side files are `X.uafl` or `X.flow.uafl` (flow field),
    /// `X.labels.png` (ready label map, used when there is no flow) and
    /// `X.detections.json` (text/bar detections).
    Analyze {
        #[arg(required = true)]
        inputs: Vec<PathBuf>,
        #[arg(long)]
        flow_dir: Option<PathBuf>,
        #[arg(long)]
        labels_dir: Option<PathBuf>,
        #[arg(long)]
        detections_dir: Option<PathBuf>,
        /// Write a combined HTML report here, plus its `.json` twin.
        #[arg(long)]
        report: Option<PathBuf>,
        /// Write the JSON result here instead of stdout.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Segment a flow field into a 16-bit label PNG.
    Segment {
        #[arg(long)]
        flow: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Flow-field tools.
    Flow {
        #[command(subcommand)]
        command: FlowCommand,
    },
    /// Read the scale bar of one image.
    Scalebar {
        #[arg(long)]
        image: PathBuf,
        #[arg(long)]
        detections: Option<PathBuf>,
    },
    /// Score segmentations or scale-bar readings.
    Eval {
        #[command(subcommand)]
        command: EvalCommand,
    },
    /// Generate seeded synthetic data.
    Synth {
        #[command(subcommand)]
        command: SynthCommand,
    },
    /// Combined report from saved `analyze` outputs and/or service task directories.
    Report {
        /// `analyze` JSON outputs.
        inputs: Vec<PathBuf>,
        /// Service task directory. Repeatable.
        #[arg(long)]
        task: Vec<PathBuf>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Run the task service.
    Serve {
        #[arg(long, default_value = "127.0.0.1")]
        host: String,
        /// 0 picks a free port; the bound one is printed.
        #[arg(long, default_value_t = 8080)]
        port: u16,
        #[arg(long, default_value = "granula-data")]
        data_dir: PathBuf,
    },
    /// Time a synthetic flow round trip.
    Bench {
        #[command(flatten)]
        scene: SceneOpts,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
    /// Talk to a running service.
    Task {
        #[arg(long, env = "GRANULA_SERVER", default_value = "http://127.0.0.1:8080")]
        server: String,
        #[command(subcommand)]
        command: TaskCommand,
    },
}

#[derive(Debug, Subcommand)]
pub enum FlowCommand {
    /// Flow field from a label PNG.
    Gen {
        #[arg(long)]
        labels: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
}

#[derive(Debug, Subcommand)]
pub enum EvalCommand {
    /// Instance segmentation scores over matching label PNGs.
    Seg {
        #[arg(long)]
        pred: PathBuf,
        #[arg(long)]
        gt: PathBuf,
        #[arg(long, default_value_t = 0.5)]
        threshold: f64,
    },
    /// Scale-bar accuracy over a corpus made by `synth scalebar`.
    Scalebar {
        #[arg(long)]
        corpus: PathBuf,
    },
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum ShapeArg {
    Disk,
    Ellipse,
    Polygon,
}

impl From<ShapeArg> for Shape {
    fn from(s: ShapeArg) -> Self {
        match s {
            ShapeArg::Disk => Shape::Disk,
            ShapeArg::Ellipse => Shape::Ellipse,
            ShapeArg::Polygon => Shape::Polygon,
        }
    }
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum UnitArg {
    Nm,
    Um,
    Mm,
}

impl From<UnitArg> for LengthUnit {
    fn from(u: UnitArg) -> Self {
        match u {
            UnitArg::Nm => LengthUnit::Nanometer,
            UnitArg::Um => LengthUnit::Micrometer,
            UnitArg::Mm => LengthUnit::Millimeter,
        }
    }
}

#[derive(Debug, Clone, Args)]
pub struct SceneOpts {
    #[arg(long, default_value_t = 1024)]
    pub width: usize,
    #[arg(long, default_value_t = 1024)]
    pub height: usize,
    #[arg(long, default_value_t = 200)]
    pub particles: usize,
    #[arg(long, value_enum, default_value = "ellipse")]
    pub shape: ShapeArg,
    /// Log of the median diameter in pixels.
    #[arg(long, default_value_t = 3.3)]
    pub mu: f64,
    #[arg(long, default_value_t = 0.3)]
    pub sigma: f64,
    #[arg(long)]
    pub min_diameter: Option<f64>,
    #[arg(long)]
    pub max_diameter: Option<f64>,
}

impl SceneOpts {
    fn args(&self) -> tools::SceneArgs {
        tools::SceneArgs {
            width: self.width,
            height: self.height,
            particles: self.particles,
            shape: self.shape.into(),
            mu: self.mu,
            sigma: self.sigma,
            min_diameter: self.min_diameter,
            max_diameter: self.max_diameter,
        }
    }
}

#[derive(Debug, Subcommand)]
pub enum SynthCommand {
    /// Particle scenes with label maps and a manifest.
    Scene {
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value_t = 10)]
        n: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Also write each image's ground-truth flow field.
        #[arg(long)]
        flows: bool,
        #[command(flatten)]
        scene: SceneOpts,
    },
    /// Labeled scale-bar images and a manifest.
    Scalebar {
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value_t = 200)]
        n: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, default_value_t = 640)]
        width: usize,
        #[arg(long, default_value_t = 480)]
        height: usize,
    },
    /// One calibrated micrograph with flow, labels and detections side files.
    Sample {
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value = "sample")]
        name: String,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, default_value_t = 200)]
        bar_length: usize,
        #[arg(long, default_value_t = 5)]
        value: u32,
        #[arg(long, value_enum, default_value = "um")]
        unit: UnitArg,
        #[command(flatten)]
        scene: SceneOpts,
    },
}

#[derive(Debug, Subcommand)]
pub enum TaskCommand {
    /// Upload an image and its side files.
    Create {
        image: PathBuf,
        #[arg(long)]
        flow: Option<PathBuf>,
        #[arg(long)]
        labels: Option<PathBuf>,
        #[arg(long)]
        detections: Option<PathBuf>,
        #[arg(long)]
        name: Option<String>,
        /// Send the effective config as task parameters.
        #[arg(long)]
        with_config: bool,
        /// Poll until the task is ready or failed.
        #[arg(long)]
        wait: bool,
    },
    List,
    Status { id: String },
    Results { id: String },
    /// Replace the active filter. No bounds clears it.
    Filter {
        id: String,
        #[arg(long)]
        min: Option<f64>,
        #[arg(long)]
        max: Option<f64>,
        /// Unit of the bounds; pixels when absent.
        #[arg(long, value_enum)]
        unit: Option<UnitArg>,
        #[arg(long)]
        exclude_edge: bool,
    },
    /// Apply a correction given as JSON, e.g. `{"kind":"delete","id":7}`.
    Correct {
        id: String,
        action: String,
        #[arg(long)]
        author: Option<String>,
    },
    Events { id: String },
    /// Save the HTML report and its JSON twin.
    Report {
        id: String,
        #[arg(long)]
        out: PathBuf,
    },
}

pub fn print_json<T: Serialize>(v: &T) -> anyhow::Result<()> {
    let mut out = std::io::stdout().lock();
    serde_json::to_writer_pretty(&mut out, v)?;
    out.write_all(b"\n")?;
    Ok(())
}

fn init_logging() {
    let filter = tracing_subscriber::EnvFilter::try_from_env(LOG_ENV).unwrap_or_else(|_| tracing_subscriber::EnvFilter::new("warn"));
    let _ = tracing_subscriber::fmt().with_env_filter(filter).with_writer(std::io::stderr).try_init();
}

/// Flag, then config, then environment.
fn resolve_threads(flag: Option<usize>, cfg: &PipelineConfig) -> Result<Option<usize>, config::ConfigError> {
    if flag == Some(0) {
        return Err(config::ConfigError("--threads must be at least 1".into()));
    }
    if let Some(n) = flag.or(cfg.threads) {
        return Ok(Some(n));
    }
    match std::env::var(THREADS_ENV) {
        Ok(v) => match v.trim().parse::<usize>() {
            Ok(n) if n > 0 => Ok(Some(n)),
            _ => Err(config::ConfigError(format!("{THREADS_ENV}={v} is not a positive integer"))),
        },
        Err(_) => Ok(None),
    }
}

enum Outcome {
    Ok,
    Partial,
}

pub fn run(cli: Cli) -> ExitCode {
    init_logging();
    let mut cfg = match config::load(cli.config.as_deref(), &cli.overrides) {
        Ok(c) => c,
        Err(e) => {
            eprintln!("error: {e}");
            return ExitCode::from(2);
        }
    };
    match resolve_threads(cli.threads, &cfg) {
        Ok(t) => cfg.threads = t,
        Err(e) => {
            eprintln!("error: {e}");
            return ExitCode::from(2);
        }
    }
    if cli.dump_config {
        print!("{}", config::dump(&cfg));
        return ExitCode::SUCCESS;
    }
    let Some(command) = cli.command else {
        eprintln!("error: no subcommand given (see --help)");
        return ExitCode::from(2);
    };
    if let Some(n) = cfg.threads {
        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(n).build_global() {
            tracing::warn!("thread pool already initialized: {e}");
        }
    }
    match dispatch(command, &cfg) {
        Ok(Outcome::Ok) => ExitCode::SUCCESS,
        Ok(Outcome::Partial) => ExitCode::from(1),
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(1)
        }
    }
}

fn runtime(threads: Option<usize>) -> anyhow::Result<tokio::runtime::Runtime> {
    let mut b = tokio::runtime::Builder::new_multi_thread();
    if let Some(n) = threads {
        b.worker_threads(n);
    }
    Ok(b.enable_all().build()?)
}

fn dispatch(command: Command, cfg: &PipelineConfig) -> anyhow::Result<Outcome> {
    match command {
        Command::Analyze { inputs, flow_dir, labels_dir, detections_dir, report, out } => {
            let images = analyze::collect_images(&inputs)?;
            if images.is_empty() {
                anyhow::bail!("no images found");
            }
            let dirs = analyze::SidecarDirs { flow: flow_dir, labels: labels_dir, detections: detections_dir };
            let results = analyze::analyze_files(&images, &dirs, cfg);
            let failed = results.iter().any(|r| !r.ok);
            let mut report_paths = None;
            if let Some(path) = report {
                let samples: Vec<analyze::Sample> = results.iter().filter_map(|r| r.analysis.as_ref()).map(analyze::Sample::from).collect();
                let digests = results.iter().flat_map(|r| r.digests.clone()).collect();
                let doc = analyze::combined_report(&samples, digests, cfg)?;
                report_paths = Some(analyze::write_report(&doc, &path)?);
            }
            let output = analyze::AnalyzeOutput { schema_version: analyze::OUTPUT_SCHEMA_VERSION, results, report: report_paths };
            match out {
                Some(p) => {
                    std::fs::write(&p, serde_json::to_vec_pretty(&output)?)?;
                    print_json(&serde_json::json!({ "out": p, "failed": failed }))?;
                }
                None => print_json(&output)?,
            }
            Ok(if failed { Outcome::Partial } else { Outcome::Ok })
        }
        Command::Segment { flow, out } => print_json(&tools::segment_file(&flow, &out, cfg)?).map(|_| Outcome::Ok),
        Command::Flow { command: FlowCommand::Gen { labels, out } } => print_json(&tools::flow_gen_file(&labels, &out, cfg)?).map(|_| Outcome::Ok),
        Command::Scalebar { image, detections } => {
            let st = tools::scalebar_file(&image, detections.as_deref(), cfg)?;
            let ok = st.reading.is_some();
            print_json(&st)?;
            Ok(if ok { Outcome::Ok } else { Outcome::Partial })
        }
        Command::Eval { command: EvalCommand::Seg { pred, gt, threshold } } => {
            let r = tools::eval_seg(&pred, &gt, threshold)?;
            print_json(&r)?;
            Ok(if r.missing.is_empty() { Outcome::Ok } else { Outcome::Partial })
        }
        Command::Eval { command: EvalCommand::Scalebar { corpus } } => print_json(&tools::eval_scalebar(&corpus, cfg)?).map(|_| Outcome::Ok),
        Command::Synth { command } => {
            match command {
                SynthCommand::Scene { out, n, seed, flows, scene } => print_json(&tools::synth_scenes(&scene.args(), n, seed, flows, &out, cfg)?)?,
                SynthCommand::Scalebar { out, n, seed, width, height } => print_json(&tools::synth_scalebars(width, height, n, seed, &out)?)?,
                SynthCommand::Sample { out, name, seed, bar_length, value, unit, scene } => {
                    print_json(&tools::synth_sample(&scene.args(), seed, bar_length, value, unit.into(), &name, &out, cfg)?)?
                }
            }
            Ok(Outcome::Ok)
        }
        Command::Report { inputs, task, out } => {
            let mut samples = Vec::new();
            for p in &inputs {
                samples.extend(analyze::load_analyze_output(p)?);
            }
            for d in &task {
                samples.push(analyze::load_task_dir(d)?);
            }
            let doc = analyze::combined_report(&samples, Vec::new(), cfg)?;
            print_json(&analyze::write_report(&doc, &out)?)?;
            Ok(Outcome::Ok)
        }
        Command::Serve { host, port, data_dir } => {
            runtime(cfg.threads)?.block_on(remote::run_server(&host, port, &data_dir, cfg.clone()))?;
            Ok(Outcome::Ok)
        }
        Command::Bench { scene, seed } => print_json(&tools::bench(&scene.args(), seed, cfg)?).map(|_| Outcome::Ok),
        Command::Task { server, command } => {
            let mut params = None;
            let op = match command {
                TaskCommand::Create { image, flow, labels, detections, name, with_config, wait } => {
                    params = with_config.then(|| cfg.clone());
                    remote::TaskOp::Create { image, flow, labels, detections, name, wait }
                }
                TaskCommand::List => remote::TaskOp::List,
                TaskCommand::Status { id } => remote::TaskOp::Status { id },
                TaskCommand::Results { id } => remote::TaskOp::Results { id },
                TaskCommand::Filter { id, min, max, unit, exclude_edge } => {
                    let filter = FilterCriteria { diameter_min: min, diameter_max: max, unit: unit.map(Into::into), exclude_edge };
                    remote::TaskOp::Filter { id, filter }
                }
                TaskCommand::Correct { id, action, author } => remote::TaskOp::Correct { id, action, author },
                TaskCommand::Events { id } => remote::TaskOp::Events { id },
                TaskCommand::Report { id, out } => remote::TaskOp::Report { id, out },
            };
            runtime(Some(1))?.block_on(remote::run_task(&server, op, params))?;
            Ok(Outcome::Ok)
        }
    }
}
