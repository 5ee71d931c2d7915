use std::collections::BTreeSet;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};
use zoomground::bench::{self, BenchError};
use zoomground::pipeline::Ablations;
use zoomground::{
    Backend, BackendError, CapturePhase, GroundingConfig, MockBackend, MockConfig, PipelineError,
    RasterImage, RefineConfig, RemoteBackend, ToySoftmaxBackend,
};

const BACKEND_ENV: &str = "ZOOMGROUND_BACKEND";

#[derive(Parser)]
#[command(
    name = "zoomground",
    version,
    about = "Ground GUI instructions to screen regions"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Ground one instruction in one screenshot and print the box.
    Ground(GroundArgs),
    /// Run a JSONL dataset and write an accuracy report.
    Eval(EvalArgs),
    /// Render attention and zoom overlays for dataset samples.
    Overlay(OverlayArgs),
}

#[derive(Args)]
struct BackendArgs {
    /// `mock`, `toy`, or the base URL of a model server.
    #[arg(long, env = BACKEND_ENV)]
    backend: Option<String>,
    /// Seed for the mock (default 0) and toy (default 42) backends.
    #[arg(long)]
    seed: Option<u64>,
}

#[derive(Clone, Copy, ValueEnum)]
enum Phase {
    Generation,
    Prefill,
}

#[derive(Args)]
struct ConfigArgs {
    #[arg(long, default_value_t = 3)]
    iterations: usize,
    #[arg(long, default_value_t = 0.7)]
    layer_fraction: f64,
    #[arg(long, default_value_t = 0.5)]
    crop_fraction: f64,
    #[arg(long, default_value_t = 2.0)]
    upscale: f64,
    /// Scoring window in view pixels, `HEIGHTxWIDTH` or a single size.
    #[arg(long, default_value = "784x784", value_parser = parse_window)]
    zoom_window: (f64, f64),
    #[arg(long, value_enum, default_value = "generation")]
    capture_phase: Phase,
    /// Number of latent thought vectors.
    #[arg(long, default_value_t = 6)]
    thought_vectors: usize,
    /// Gradient-ascent steps on the thought vectors.
    #[arg(long, default_value_t = 5)]
    refine_steps: usize,
    #[arg(long, default_value_t = 0.1)]
    learning_rate: f64,
    #[arg(long, default_value_t = 64)]
    max_description_tokens: usize,
    /// Ground the raw instruction.
    #[arg(long)]
    no_refinement: bool,
    /// Describe the target without optimizing the thought vectors.
    #[arg(long)]
    no_think: bool,
    /// A single generation on the full screenshot.
    #[arg(long)]
    no_visual_focus: bool,
    /// Permit crop fraction and upscale that change the view size.
    #[arg(long)]
    variable_view: bool,
}

impl ConfigArgs {
    fn to_config(&self) -> GroundingConfig {
        GroundingConfig {
            iterations: self.iterations,
            layer_fraction: self.layer_fraction,
            crop_fraction: self.crop_fraction,
            upscale: self.upscale,
            zoom_window_px: self.zoom_window,
            capture_phase: match self.capture_phase {
                Phase::Generation => CapturePhase::Generation,
                Phase::Prefill => CapturePhase::Prefill,
            },
            refine: Some(RefineConfig {
                n_vectors: self.thought_vectors,
                steps: self.refine_steps,
                learning_rate: self.learning_rate,
                max_description_tokens: self.max_description_tokens,
            }),
            ablations: Ablations {
                no_refinement: self.no_refinement,
                no_think: self.no_think,
                no_visual_focus: self.no_visual_focus,
            },
            constant_view: !self.variable_view,
        }
    }
}

#[derive(Args)]
struct GroundArgs {
    #[arg(long)]
    image: PathBuf,
    #[arg(long)]
    instruction: String,
    /// Print the full result (refined instruction, zoom trail) as JSON.
    #[arg(long)]
    json: bool,
    #[command(flatten)]
    backend: BackendArgs,
    #[command(flatten)]
    config: ConfigArgs,
}

#[derive(Args)]
struct EvalArgs {
    #[arg(long)]
    dataset: PathBuf,
    #[arg(long)]
    out: PathBuf,
    /// Samples in flight; defaults to the backend's capacity.
    #[arg(long)]
    concurrency: Option<usize>,
    /// Record per-sample wall time (the report is then not reproducible).
    #[arg(long)]
    timings: bool,
    #[command(flatten)]
    backend: BackendArgs,
    #[command(flatten)]
    config: ConfigArgs,
}

#[derive(Args)]
struct OverlayArgs {
    #[arg(long)]
    dataset: PathBuf,
    /// Comma-separated sample ids; all samples when omitted.
    #[arg(long, value_delimiter = ',')]
    ids: Vec<String>,
    #[arg(long)]
    out_dir: PathBuf,
    #[command(flatten)]
    backend: BackendArgs,
    #[command(flatten)]
    config: ConfigArgs,
}

fn parse_window(s: &str) -> Result<(f64, f64), String> {
    let parse = |v: &str| v.trim().parse::<f64>().map_err(|e| format!("{v:?}: {e}"));
    match s.split_once(['x', 'X']) {
        Some((h, w)) => Ok((parse(h)?, parse(w)?)),
        None => parse(s).map(|v| (v, v)),
    }
}

/// Marks errors that should exit with status 2.
#[derive(Debug)]
struct UsageError(String);

impl std::fmt::Display for UsageError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for UsageError {}

fn is_configuration(err: &anyhow::Error) -> bool {
    err.chain().any(|e| {
        e.is::<UsageError>()
            || e.downcast_ref::<PipelineError>().is_some_and(PipelineError::is_configuration)
            || matches!(e.downcast_ref::<BenchError>(), Some(BenchError::Pipeline(p)) if p.is_configuration())
            || matches!(
                e.downcast_ref::<BackendError>(),
                Some(BackendError::VersionMismatch { .. } | BackendError::Capability(_))
            )
    })
}

fn open_backend(args: &BackendArgs) -> Result<Box<dyn Backend>> {
    let Some(spec) = args.backend.as_deref() else {
        return Err(UsageError(format!("no backend: pass --backend or set {BACKEND_ENV}")).into());
    };
    Ok(match spec {
        "mock" => Box::new(MockBackend::new(MockConfig {
            seed: args.seed.unwrap_or(0),
            ..MockConfig::default()
        })),
        "toy" => Box::new(ToySoftmaxBackend::new(args.seed.unwrap_or(42), 16)),
        url if url.starts_with("http://") || url.starts_with("https://") => {
            Box::new(RemoteBackend::connect(url).with_context(|| format!("connecting to {url}"))?)
        }
        other => {
            return Err(UsageError(format!(
                "unknown backend {other:?}; expected mock, toy or an http(s) URL"
            ))
            .into())
        }
    })
}

fn check_config(cfg: &GroundingConfig) -> Result<()> {
    cfg.validate().map_err(|e| UsageError(e.to_string()))?;
    Ok(())
}

fn run_ground(args: GroundArgs) -> Result<()> {
    let cfg = args.config.to_config();
    check_config(&cfg)?;
    let backend = open_backend(&args.backend)?;
    let image = RasterImage::open(&args.image)
        .with_context(|| format!("reading {}", args.image.display()))?;
    let result = zoomground::ground(backend.as_ref(), &image, &args.instruction, &cfg)?;
    if args.json {
        println!("{}", serde_json::to_string_pretty(&result)?);
    } else {
        let [x1, y1, x2, y2] = result.predicted_box.to_array();
        println!("[{x1:.1}, {y1:.1}, {x2:.1}, {y2:.1}]");
    }
    Ok(())
}

fn write_atomically(path: &Path, contents: &str) -> Result<()> {
    let dir = path
        .parent()
        .filter(|p| !p.as_os_str().is_empty())
        .unwrap_or(Path::new("."));
    let tmp = dir.join(format!(
        ".{}.tmp",
        path.file_name()
            .map(|n| n.to_string_lossy())
            .unwrap_or_default()
    ));
    std::fs::write(&tmp, contents).with_context(|| format!("writing {}", tmp.display()))?;
    std::fs::rename(&tmp, path).with_context(|| format!("writing {}", path.display()))?;
    Ok(())
}

fn run_eval(args: EvalArgs) -> Result<()> {
    let cfg = args.config.to_config();
    check_config(&cfg)?;
    if args.concurrency == Some(0) {
        bail!(UsageError("--concurrency must be at least 1".into()));
    }
    let samples = bench::load_samples(&args.dataset)?;
    let backend = open_backend(&args.backend)?;
    let runs = bench::run_samples(backend.as_ref(), &samples, &cfg, args.concurrency)?;
    let report = bench::evaluate_runs(&runs, &samples, args.timings);
    write_atomically(&args.out, &bench::to_canonical_json(&report))?;
    let failures = runs.iter().filter(|r| r.outcome.is_err()).count();
    eprintln!(
        "accuracy {:.4} ({}) over {} samples, {failures} failed; report in {}",
        report.accuracy,
        report.accuracy_fraction,
        report.total,
        args.out.display()
    );
    Ok(())
}

fn run_overlay(args: OverlayArgs) -> Result<()> {
    let cfg = args.config.to_config();
    check_config(&cfg)?;
    let samples = bench::load_samples(&args.dataset)?;
    let wanted: BTreeSet<&str> = args.ids.iter().map(String::as_str).collect();
    let known: BTreeSet<&str> = samples.iter().map(|s| s.id.as_str()).collect();
    if let Some(missing) = wanted.difference(&known).next() {
        return Err(UsageError(format!(
            "no sample with id {missing:?} in {}",
            args.dataset.display()
        ))
        .into());
    }
    std::fs::create_dir_all(&args.out_dir)
        .with_context(|| format!("creating {}", args.out_dir.display()))?;
    let backend = open_backend(&args.backend)?;
    for sample in samples
        .iter()
        .filter(|s| wanted.is_empty() || wanted.contains(s.id.as_str()))
    {
        let image = RasterImage::open(&sample.image_path).with_context(|| {
            format!(
                "sample {}: reading {}",
                sample.id,
                sample.image_path.display()
            )
        })?;
        let result = zoomground::ground(backend.as_ref(), &image, &sample.instruction, &cfg)
            .with_context(|| format!("sample {}", sample.id))?;
        for path in bench::emit_overlays(
            &sample.id,
            &result,
            &image,
            Some(&sample.gt_box),
            &args.out_dir,
        )? {
            println!("{}", path.display());
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let outcome = match cli.command {
        Command::Ground(a) => run_ground(a),
        Command::Eval(a) => run_eval(a),
        Command::Overlay(a) => run_overlay(a),
    };
    match outcome {
        Ok(()) => ExitCode::SUCCESS,
        Err(err) => {
            eprintln!("error: {err:#}");
            ExitCode::from(if is_configuration(&err) { 2 } else { 1 })
        }
    }
}
