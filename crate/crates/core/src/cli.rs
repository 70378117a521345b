//! `thermopatch` command line.
//!
//! Exit codes: 0 success, 1 usage or precondition failure, 2 runtime
//! failure.

use std::ffi::OsString;
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};

use crate::attack::{FrameView, PatchLayer, RasterCache, TargetDraw};
use crate::config::{ConfigError, ExperimentConfig};
use crate::eval::evaluate;
use crate::imaging::{encode_pgm, load_pgm, save_pgm, BBox, GrayImage, ImageError};
use crate::optimizer::{optimize, OptimizeError};
use crate::patchgen::{rasterize_patch, validate_theta, PatchError, PatchTheta};
use crate::rng::{self, tag};
use crate::scene::{generate_dataset, load_dataset, SceneError};

#[derive(Debug, Parser)]
#[command(name = "thermopatch", version, about = "Universal adversarial patches for infrared pedestrian detectors")]
struct Cli {
    /// Worker threads for fitness and evaluation (default: all cores).
    #[arg(long, global = true)]
    threads: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Generate a synthetic infrared pedestrian dataset.
    Synth(SynthArgs),
    /// Search for a universal patch over a dataset.
    Optimize(OptimizeArgs),
    /// Measure attack success of a patch on a dataset.
    Eval(EvalArgs),
    /// Render a patch on a white background.
    Render(RenderArgs),
    /// Compose a patch onto one image under random transforms.
    Preview(PreviewArgs),
}

#[derive(Debug, Args)]
struct SynthArgs {
    #[arg(long)]
    out: PathBuf,
    #[arg(long)]
    count: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    config: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct OptimizeArgs {
    #[arg(long)]
    dataset: PathBuf,
    #[arg(long)]
    config: Option<PathBuf>,
    /// Output theta document; `history.json` is written next to it.
    #[arg(long)]
    out: PathBuf,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    pop: Option<usize>,
    #[arg(long)]
    iters: Option<usize>,
}

#[derive(Debug, Args)]
struct EvalArgs {
    #[arg(long)]
    dataset: PathBuf,
    #[arg(long)]
    theta: PathBuf,
    #[arg(long)]
    config: Option<PathBuf>,
    /// JSON report path; the CSV table is written with a `.csv` extension.
    #[arg(long)]
    report: PathBuf,
    /// Apply one random transform draw per target.
    #[arg(long)]
    eot: bool,
    #[arg(long)]
    seed: Option<u64>,
}

#[derive(Debug, Args)]
struct RenderArgs {
    #[arg(long)]
    theta: PathBuf,
    /// Side of the output image in pixels.
    #[arg(long)]
    size: usize,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Debug, Args)]
struct PreviewArgs {
    #[arg(long)]
    image: PathBuf,
    /// Target box as `X,Y,W,H`.
    #[arg(long = "box", value_parser = parse_box)]
    bbox: BBox,
    #[arg(long)]
    theta: PathBuf,
    #[arg(long, default_value_t = 0)]
    draws: usize,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    out: PathBuf,
    #[arg(long)]
    config: Option<PathBuf>,
}

fn parse_box(s: &str) -> Result<BBox, String> {
    let parts: Vec<&str> = s.split(',').map(str::trim).collect();
    if parts.len() != 4 {
        return Err(format!("expected X,Y,W,H, got {s:?}"));
    }
    let mut v = [0.0; 4];
    for (slot, p) in v.iter_mut().zip(&parts) {
        *slot = p.parse::<f64>().map_err(|_| format!("{p:?} is not a number"))?;
    }
    let b = BBox::from_array(v);
    if !b.is_valid() {
        return Err(format!("box {s:?} must have positive size"));
    }
    Ok(b)
}

/// A failed command: exit code plus message.
#[derive(Debug)]
pub struct CliError {
    pub code: i32,
    pub message: String,
}

impl CliError {
    fn usage(message: impl Into<String>) -> Self {
        Self {
            code: 1,
            message: message.into(),
        }
    }

    fn runtime(message: impl Into<String>) -> Self {
        Self {
            code: 2,
            message: message.into(),
        }
    }
}

impl From<ConfigError> for CliError {
    fn from(e: ConfigError) -> Self {
        Self::usage(e.to_string())
    }
}

impl From<SceneError> for CliError {
    fn from(e: SceneError) -> Self {
        Self::usage(e.to_string())
    }
}

impl From<PatchError> for CliError {
    fn from(e: PatchError) -> Self {
        Self::usage(e.to_string())
    }
}

fn image_error(e: ImageError) -> CliError {
    match e {
        ImageError::Io { .. } => CliError::runtime(e.to_string()),
        _ => CliError::usage(e.to_string()),
    }
}

fn write_file(path: &Path, bytes: &[u8]) -> Result<(), CliError> {
    fs::write(path, bytes).map_err(|e| CliError::runtime(format!("cannot write {}: {e}", path.display())))
}

fn load_config(path: Option<&Path>) -> Result<ExperimentConfig, CliError> {
    match path {
        Some(p) => Ok(ExperimentConfig::load(p)?),
        None => Ok(ExperimentConfig::default()),
    }
}

fn load_theta(path: &Path) -> Result<PatchTheta, CliError> {
    let text = fs::read_to_string(path).map_err(|e| CliError::usage(format!("cannot read theta {}: {e}", path.display())))?;
    let theta = PatchTheta::from_json(&text).map_err(|e| CliError::usage(format!("theta {} is malformed: {e}", path.display())))?;
    let violations = validate_theta(&theta);
    if !violations.is_empty() {
        let list: Vec<String> = violations.iter().map(ToString::to_string).collect();
        return Err(CliError::usage(format!("theta {} is infeasible: {}", path.display(), list.join("; "))));
    }
    Ok(theta)
}

fn load_samples(dir: &Path) -> Result<Vec<crate::scene::SceneSample>, CliError> {
    let loaded = load_dataset(dir)?;
    if loaded.skipped_boxes > 0 || loaded.dropped_samples > 0 {
        eprintln!(
            "skipped {} boxes shorter than 120 px; dropped {} samples left without boxes",
            loaded.skipped_boxes, loaded.dropped_samples
        );
    }
    if loaded.samples.is_empty() {
        return Err(CliError::usage(format!("dataset {} has no usable samples", dir.display())));
    }
    Ok(loaded.samples)
}

fn cmd_synth(a: SynthArgs, out: &mut (dyn Write + Send)) -> Result<(), CliError> {
    let mut cfg = load_config(a.config.as_deref())?;
    if let Some(c) = a.count {
        cfg.scene.count = c;
    }
    let seed = a.seed.unwrap_or(cfg.swarm.seed);
    let samples = generate_dataset(seed, &cfg.scene, &a.out)?;
    let _ = writeln!(out, "wrote {} scenes to {}", samples.len(), a.out.display());
    Ok(())
}

fn cmd_optimize(a: OptimizeArgs, out: &mut (dyn Write + Send)) -> Result<(), CliError> {
    let mut cfg = load_config(a.config.as_deref())?;
    if let Some(s) = a.seed {
        cfg.swarm.seed = s;
    }
    if let Some(p) = a.pop {
        cfg.swarm.pop = p;
    }
    if let Some(k) = a.iters {
        cfg.swarm.iters = k;
    }
    cfg.validate()?;
    let samples = load_samples(&a.dataset)?;
    let oracle = cfg.oracle.build().map_err(|e| CliError::runtime(e.to_string()))?;
    let result = optimize(&samples, &oracle, &cfg.swarm, &cfg.eot, &cfg.patch).map_err(|e| match e {
        OptimizeError::EmptyDataset | OptimizeError::Config(_) => CliError::usage(e.to_string()),
        e => CliError::runtime(e.to_string()),
    })?;
    write_file(&a.out, result.best_theta.to_json().as_bytes())?;
    let history_path = a.out.with_file_name("history.json");
    write_file(&history_path, result.to_json().as_bytes())?;
    let _ = writeln!(
        out,
        "best fitness {:.6} (initial mean {:.6}); wrote {} and {}",
        result.best_fitness,
        result.initial_mean_fitness,
        a.out.display(),
        history_path.display()
    );
    Ok(())
}

fn cmd_eval(a: EvalArgs, out: &mut (dyn Write + Send)) -> Result<(), CliError> {
    let mut cfg = load_config(a.config.as_deref())?;
    if let Some(s) = a.seed {
        cfg.swarm.seed = s;
    }
    let theta = load_theta(&a.theta)?;
    let samples = load_samples(&a.dataset)?;
    let oracle = cfg.oracle.build().map_err(|e| CliError::runtime(e.to_string()))?;
    let eot = a.eot.then_some(&cfg.eot);
    let report = evaluate(&theta, &samples, &oracle, eot, cfg.patch.anchor, cfg.swarm.seed)
        .map_err(|e| CliError::runtime(e.to_string()))?;
    let csv = report.write(&a.report).map_err(|e| CliError::runtime(e.to_string()))?;
    let asr = report.asr.map_or("undefined".to_string(), |v| format!("{v:.4}"));
    let _ = writeln!(
        out,
        "asr {asr} over {} clean detections of {} targets; wrote {} and {}",
        report.n_clean_detected,
        report.n_targets,
        a.report.display(),
        csv.display()
    );
    Ok(())
}

/// The patch alone on white: `(1 - c) + c * gray`.
pub fn render_on_white(theta: &PatchTheta, size: usize) -> Result<GrayImage, PatchError> {
    let raster = rasterize_patch(theta, size)?;
    let g = theta.gray.clamp(0.0, 1.0);
    Ok(GrayImage::from_fn(size, size, |x, y| {
        let c = raster.get(x, y);
        (1.0 - c) + c * g
    }))
}

fn cmd_render(a: RenderArgs, out: &mut (dyn Write + Send)) -> Result<(), CliError> {
    let theta = load_theta(&a.theta)?;
    let image = render_on_white(&theta, a.size)?;
    write_file(&a.out, &encode_pgm(&image))?;
    let _ = writeln!(out, "wrote {}x{} patch to {}", a.size, a.size, a.out.display());
    Ok(())
}

fn cmd_preview(a: PreviewArgs, out: &mut (dyn Write + Send)) -> Result<(), CliError> {
    let cfg = load_config(a.config.as_deref())?;
    let seed = a.seed.unwrap_or(cfg.swarm.seed);
    let theta = load_theta(&a.theta)?;
    let image = load_pgm(&a.image).map_err(image_error)?;
    image.check_box(&a.bbox).map_err(image_error)?;
    let rasters = RasterCache::build(&theta, [&a.bbox])?;
    fs::create_dir_all(&a.out).map_err(|e| CliError::usage(format!("cannot create {}: {e}", a.out.display())))?;
    let (w, h) = (image.width(), image.height());
    let runtime = |e: &dyn std::fmt::Display| CliError::runtime(e.to_string());
    let mut boxes = Vec::new();
    for k in 0..a.draws.max(1) {
        let eot = (a.draws > 0).then_some(&cfg.eot);
        let mut rng = rng::stream(seed, &[tag::PREVIEW, k as u64]);
        let draw = TargetDraw::sample(&mut rng, eot, &a.bbox, w, h).map_err(|e| runtime(&e))?;
        let layer = PatchLayer::new(&theta, &rasters, &a.bbox, &draw, cfg.patch.anchor).map_err(|e| runtime(&e))?;
        let frame = FrameView::new(&image, &a.bbox, Some(&layer), &draw).to_image();
        let path = a.out.join(format!("preview_{k:03}.pgm"));
        save_pgm(&frame, &path).map_err(image_error)?;
        boxes.push(draw.moved.to_array());
    }
    let manifest = serde_json::to_string_pretty(&boxes).expect("boxes serialize") + "\n";
    write_file(&a.out.join("boxes.json"), manifest.as_bytes())?;
    let _ = writeln!(out, "wrote {} preview images to {}", boxes.len(), a.out.display());
    Ok(())
}

fn dispatch(command: Command, out: &mut (dyn Write + Send)) -> Result<(), CliError> {
    match command {
        Command::Synth(a) => cmd_synth(a, out),
        Command::Optimize(a) => cmd_optimize(a, out),
        Command::Eval(a) => cmd_eval(a, out),
        Command::Render(a) => cmd_render(a, out),
        Command::Preview(a) => cmd_preview(a, out),
    }
}

/// Parses `args` (program name first) and runs the command, returning the
/// process exit code.
pub fn run_with<I, T>(args: I, out: &mut (dyn Write + Send), err: &mut (dyn Write + Send)) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            use clap::error::ErrorKind;
            let code = match e.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => 0,
                _ => 1,
            };
            let text = e.render().to_string();
            let _ = if code == 0 { write!(out, "{text}") } else { write!(err, "{text}") };
            return code;
        }
    };
    let pool = match cli.threads {
        Some(0) => {
            let _ = writeln!(err, "error: --threads must be at least 1");
            return 1;
        }
        Some(n) => rayon::ThreadPoolBuilder::new().num_threads(n).build(),
        None => rayon::ThreadPoolBuilder::new().build(),
    };
    let pool = match pool {
        Ok(p) => p,
        Err(e) => {
            let _ = writeln!(err, "error: cannot start worker pool: {e}");
            return 2;
        }
    };
    match pool.install(|| dispatch(cli.command, out)) {
        Ok(()) => 0,
        Err(e) => {
            let _ = writeln!(err, "error: {}", e.message);
            e.code
        }
    }
}

pub fn run() -> i32 {
    run_with(std::env::args_os(), &mut std::io::stdout(), &mut std::io::stderr())
}
