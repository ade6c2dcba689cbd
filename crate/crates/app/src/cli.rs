//! Command line: `build-dataset`, `train`, `evaluate`, `sumo-convert`, `generate`, `serve`.
//!
//! Settings resolve as flag, then `TRAFFICGEN_*` environment variable, then the config
//! file given by `--config`, then built-in defaults.

use std::fs::{self, File, OpenOptions};
use std::io::{BufWriter, Write};
use std::net::SocketAddr;
use std::path::{Path, PathBuf};

use anyhow::{bail, ensure, Context};
use clap::{Args, Parser, Subcommand};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use trafficgen::config::{load_config, ModelConfig, TrainConfig};
use trafficgen::dataset::synthetic::synthetic_dataset;
use trafficgen::dataset::{
    load_frame, open_dataset, read_frame_index, write_dataset, DataPoint, Dataset, Split, SplitRatio,
};
use trafficgen::eval::{evaluate_model, EvalOptions, PrototypeSegmenter, RandomProjection};
use trafficgen::scene::{GraphVariant, LatticeSpec};
use trafficgen::spade::{
    generate_image, load_checkpoint, load_model, save_checkpoint, TrafficModel, TrainState, TrainingBatch,
};
use trafficgen::sumo::{
    group_frames, read_vehicle_states, sim_frame_to_scene, BBoxHistogram, LaneCorrespondence, SizeDraw,
};

use crate::request::SceneRequest;
use crate::service::{encode_png, serve, AppState, DEFAULT_QUEUE};

/// File name of the box-size histogram written next to a dataset manifest.
pub const HISTOGRAM_FILE: &str = "histogram.json";
pub const LOSS_LOG: &str = "loss.jsonl";
/// Written into an output directory when a run stops early.
pub const FAILURE_MARKER: &str = "INCOMPLETE.json";

/// Contents of a `--config` file (TOML, or JSON when the extension is `.json`).
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct AppConfig {
    pub model: ModelConfig,
    pub train: TrainConfig,
    pub schedule: Schedule,
    pub data: DataConfig,
    pub serve: ServeConfig,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct Schedule {
    pub steps: u64,
    /// Save a checkpoint every this many steps; 0 saves only at the end.
    pub checkpoint_every: u64,
}

impl Default for Schedule {
    fn default() -> Self {
        Self {
            steps: 1000,
            checkpoint_every: 0,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct DataConfig {
    /// Dataset directory; when absent, training renders procedural frames.
    pub dataset: Option<PathBuf>,
    pub synthetic_count: usize,
    pub synthetic_seed: u64,
}

impl Default for DataConfig {
    fn default() -> Self {
        Self {
            dataset: None,
            synthetic_count: 20,
            synthetic_seed: 0,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ServeConfig {
    pub addr: SocketAddr,
    pub queue: usize,
    pub checkpoint: Option<PathBuf>,
}

impl Default for ServeConfig {
    fn default() -> Self {
        Self {
            addr: SocketAddr::from(([127, 0, 0, 1], 8080)),
            queue: DEFAULT_QUEUE,
            checkpoint: None,
        }
    }
}

#[derive(Debug, Parser)]
#[command(name = "trafficgen", version, about = "Scene-graph conditioned traffic junction image synthesis")]
pub struct Cli {
    /// TOML or JSON config file.
    #[arg(long, global = true, env = "TRAFFICGEN_CONFIG")]
    pub config: Option<PathBuf>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Build a dataset from indexed frames or procedural frames.
    BuildDataset(BuildDatasetArgs),
    /// Train the model and write checkpoints plus a loss log.
    Train(TrainArgs),
    /// Score a checkpoint on a dataset and write a JSON report.
    Evaluate(EvaluateArgs),
    /// Turn simulator vehicle states into scene request files.
    SumoConvert(SumoConvertArgs),
    /// Generate one PNG from a scene request file.
    Generate(GenerateArgs),
    /// Run the HTTP service.
    Serve(ServeArgs),
}

#[derive(Debug, Args)]
pub struct BuildDatasetArgs {
    /// Frame index: JSON list of {image, detections, timestamp}.
    #[arg(long, conflicts_with = "synthetic", required_unless_present = "synthetic")]
    pub frames: Option<PathBuf>,
    /// Render this many procedural frames instead.
    #[arg(long)]
    pub synthetic: Option<usize>,
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long, env = "TRAFFICGEN_VARIANT")]
    pub variant: Option<GraphVariant>,
    /// Lattice as ROWSxCOLS, e.g. 20x20.
    #[arg(long, env = "TRAFFICGEN_LATTICE", value_parser = parse_lattice)]
    pub lattice: Option<(usize, usize)>,
    /// Square output resolution; defaults to the model image size.
    #[arg(long, env = "TRAFFICGEN_RESOLUTION")]
    pub resolution: Option<u32>,
    #[arg(long, env = "TRAFFICGEN_SEED")]
    pub seed: Option<u64>,
    /// Spatial bins per axis of the written box-size histogram.
    #[arg(long, default_value_t = BBoxHistogram::DEFAULT_BINS)]
    pub bins: usize,
}

#[derive(Debug, Args)]
pub struct TrainArgs {
    #[arg(long, env = "TRAFFICGEN_DATASET")]
    pub dataset: Option<PathBuf>,
    #[arg(long, env = "TRAFFICGEN_STEPS")]
    pub steps: Option<u64>,
    #[arg(long, env = "TRAFFICGEN_BATCH_SIZE")]
    pub batch_size: Option<usize>,
    #[arg(long, env = "TRAFFICGEN_SEED")]
    pub seed: Option<u64>,
    #[arg(long, env = "TRAFFICGEN_CHECKPOINT_EVERY")]
    pub checkpoint_every: Option<u64>,
    /// Output directory for the checkpoint and loss log.
    #[arg(long)]
    pub out: PathBuf,
    /// Continue from this checkpoint; model and optimizer settings come from it.
    #[arg(long)]
    pub resume: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct EvaluateArgs {
    #[arg(long, env = "TRAFFICGEN_CHECKPOINT")]
    pub checkpoint: PathBuf,
    #[arg(long, env = "TRAFFICGEN_DATASET")]
    pub dataset: PathBuf,
    /// Report path.
    #[arg(long)]
    pub out: PathBuf,
    /// Score buses as well.
    #[arg(long)]
    pub include_bus: bool,
    #[arg(long, env = "TRAFFICGEN_SEED")]
    pub seed: Option<u64>,
    /// Embedding size of the random-projection feature extractor.
    #[arg(long, default_value_t = 64)]
    pub feature_dim: usize,
}

#[derive(Debug, Args)]
pub struct SumoConvertArgs {
    /// JSON list of vehicle states.
    #[arg(long)]
    pub frames: PathBuf,
    /// Lane correspondence JSON.
    #[arg(long)]
    pub lanes: PathBuf,
    /// Box-size histogram JSON.
    #[arg(long, conflicts_with = "dataset")]
    pub histogram: Option<PathBuf>,
    /// Dataset directory whose histogram to use.
    #[arg(long, env = "TRAFFICGEN_DATASET")]
    pub dataset: Option<PathBuf>,
    /// Output directory for one scene request per frame.
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long, env = "TRAFFICGEN_VARIANT")]
    pub variant: Option<GraphVariant>,
    /// Draw sizes with this seed; without it the bin median is used.
    #[arg(long)]
    pub seed: Option<u64>,
}

#[derive(Debug, Args)]
pub struct GenerateArgs {
    /// Scene request JSON.
    #[arg(long)]
    pub scene: PathBuf,
    /// Without a checkpoint, an untrained model built from the config is used.
    #[arg(long, env = "TRAFFICGEN_CHECKPOINT")]
    pub checkpoint: Option<PathBuf>,
    #[arg(long)]
    pub out: PathBuf,
    /// Overrides the request's seed.
    #[arg(long)]
    pub seed: Option<u64>,
}

#[derive(Debug, Args)]
pub struct ServeArgs {
    #[arg(long, env = "TRAFFICGEN_CHECKPOINT")]
    pub checkpoint: Option<PathBuf>,
    #[arg(long, env = "TRAFFICGEN_ADDR")]
    pub addr: Option<SocketAddr>,
    #[arg(long, env = "TRAFFICGEN_QUEUE")]
    pub queue: Option<usize>,
}

fn parse_lattice(s: &str) -> Result<(usize, usize), String> {
    let (r, c) = s
        .split_once(['x', 'X'])
        .ok_or_else(|| format!("expected ROWSxCOLS, got {s:?}"))?;
    let parse = |v: &str| v.trim().parse::<usize>().map_err(|_| format!("expected ROWSxCOLS, got {s:?}"));
    Ok((parse(r)?, parse(c)?))
}

impl Cli {
    pub fn app_config(&self) -> anyhow::Result<AppConfig> {
        match &self.config {
            Some(path) => {
                let cfg: AppConfig = load_config(path)?;
                cfg.model
                    .validate()
                    .with_context(|| format!("model section of {}", path.display()))?;
                Ok(cfg)
            }
            None => Ok(AppConfig::default()),
        }
    }
}

pub fn run(cli: Cli) -> anyhow::Result<()> {
    let config = cli.app_config()?;
    match cli.command {
        Command::BuildDataset(a) => build_dataset(&config, &a),
        Command::Train(a) => train(&config, &a),
        Command::Evaluate(a) => evaluate(&config, &a),
        Command::SumoConvert(a) => sumo_convert(&config, &a),
        Command::Generate(a) => generate(&config, &a),
        Command::Serve(a) => {
            let runtime = tokio::runtime::Runtime::new()?;
            runtime.block_on(serve_command(&config, &a))
        }
    }
}

fn write_json(path: &Path, value: &impl Serialize) -> anyhow::Result<()> {
    fs::write(path, serde_json::to_string_pretty(value)?).with_context(|| format!("writing {}", path.display()))
}

pub fn build_dataset(config: &AppConfig, args: &BuildDatasetArgs) -> anyhow::Result<()> {
    let variant = args.variant.unwrap_or(config.model.variant);
    let mut lattice = config.model.lattice;
    if let Some((rows, cols)) = args.lattice {
        lattice = LatticeSpec::new(rows, cols, lattice.connect_radius_hops)?;
    }
    let seed = args.seed.unwrap_or(config.train.seed);
    let size = args.resolution.unwrap_or(config.model.generator.image_size as u32);
    ensure!(size > 0, "resolution must be positive");

    let mut failures = Vec::new();
    let points: Vec<DataPoint> = if let Some(n) = args.synthetic {
        ensure!(n > 0, "--synthetic needs at least one frame");
        synthetic_dataset(n, seed, size, lattice, variant)?
    } else {
        let index = args.frames.as_ref().expect("clap requires --frames or --synthetic");
        let records = read_frame_index(index)?;
        ensure!(!records.is_empty(), "{} lists no frames", index.display());
        let mut points = Vec::with_capacity(records.len());
        for r in &records {
            match load_frame(r, Some((size, size)), lattice, variant, seed) {
                Ok(p) => points.push(p),
                Err(e) => {
                    tracing::warn!(image = %r.image.display(), error = %e, "skipping frame");
                    failures.push(format!("{}: {e}", r.image.display()));
                }
            }
        }
        points
    };
    ensure!(!points.is_empty(), "no frame could be loaded");
    let hist = BBoxHistogram::from_graphs(points.iter().map(|p| &p.graph), args.bins)?;
    let manifest = write_dataset(points, &args.out, SplitRatio::default())?;
    write_json(&args.out.join(HISTOGRAM_FILE), &hist)?;
    let marker = args.out.join(FAILURE_MARKER);
    if failures.is_empty() {
        let _ = fs::remove_file(&marker);
    } else {
        write_json(&marker, &serde_json::json!({ "skipped_frames": failures }))?;
    }
    println!(
        "wrote {} points ({} train, {} test) to {}{}",
        manifest.count,
        manifest.split_count(Split::Train),
        manifest.split_count(Split::Test),
        args.out.display(),
        if failures.is_empty() {
            String::new()
        } else {
            format!("; {} frames skipped, see {FAILURE_MARKER}", failures.len())
        }
    );
    Ok(())
}

fn load_points(dataset: &Dataset, split: Split) -> anyhow::Result<Vec<DataPoint>> {
    let mut indices = dataset.split_indices(split);
    if indices.is_empty() {
        tracing::warn!(?split, "split is empty; using every point");
        indices = (0..dataset.len()).collect();
    }
    indices.into_iter().map(|i| Ok(dataset.load(i)?)).collect()
}

fn check_compatible(points: &[DataPoint], model: &ModelConfig) -> anyhow::Result<()> {
    let s = model.generator.image_size as u32;
    for (i, p) in points.iter().enumerate() {
        ensure!(
            p.graph.variant() == model.variant && p.graph.lattice() == model.lattice,
            "data point {i} is {} on a {}x{} lattice but the model expects {} on {}x{}",
            p.graph.variant(),
            p.graph.lattice().rows,
            p.graph.lattice().cols,
            model.variant,
            model.lattice.rows,
            model.lattice.cols
        );
        ensure!(
            p.image.dimensions() == (s, s),
            "data point {i} is {:?} but the model expects {s}x{s}; rebuild the dataset with --resolution {s}",
            p.image.dimensions()
        );
    }
    Ok(())
}

/// Indices of the batch for `step`: epochs are seeded permutations of the data.
pub fn batch_indices(step: u64, batch: usize, n: usize, seed: u64) -> Vec<usize> {
    let mut cached: Option<(u64, Vec<usize>)> = None;
    (0..batch as u64)
        .map(|j| {
            let global = step * batch as u64 + j;
            let epoch = global / n as u64;
            if cached.as_ref().is_none_or(|(e, _)| *e != epoch) {
                let mut perm: Vec<usize> = (0..n).collect();
                perm.shuffle(&mut ChaCha8Rng::seed_from_u64(seed ^ epoch.wrapping_mul(0x9E37_79B9_7F4A_7C15)));
                cached = Some((epoch, perm));
            }
            cached.as_ref().expect("set above").1[(global % n as u64) as usize]
        })
        .collect()
}

pub fn train(config: &AppConfig, args: &TrainArgs) -> anyhow::Result<()> {
    let mut state = match &args.resume {
        Some(dir) => load_checkpoint(dir).with_context(|| format!("resuming from {}", dir.display()))?,
        None => {
            let mut train = config.train.clone();
            if let Some(b) = args.batch_size {
                train.batch_size = b;
            }
            if let Some(s) = args.seed {
                train.seed = s;
            }
            TrainState::new(&config.model, &train)?
        }
    };
    let model_cfg = state.model.config.clone();
    let batch = state.train.batch_size;
    ensure!(batch >= 2 && batch % 2 == 0, "batch size must be even and at least 2, got {batch}");
    let steps = args.steps.unwrap_or(config.schedule.steps);
    let every = args.checkpoint_every.unwrap_or(config.schedule.checkpoint_every);

    let points = match args.dataset.as_ref().or(config.data.dataset.as_ref()) {
        Some(dir) => load_points(&open_dataset(dir)?, Split::Train)?,
        None => synthetic_dataset(
            config.data.synthetic_count,
            config.data.synthetic_seed,
            model_cfg.generator.image_size as u32,
            model_cfg.lattice,
            model_cfg.variant,
        )?,
    };
    ensure!(!points.is_empty(), "the training set is empty");
    check_compatible(&points, &model_cfg)?;

    fs::create_dir_all(&args.out).with_context(|| format!("creating {}", args.out.display()))?;
    let log_path = args.out.join(LOSS_LOG);
    let append = args.resume.is_some() && log_path.exists();
    let log = OpenOptions::new()
        .create(true)
        .write(true)
        .append(append)
        .truncate(!append)
        .open(&log_path)
        .with_context(|| format!("opening {}", log_path.display()))?;
    let mut log = BufWriter::new(log);
    let marker = args.out.join(FAILURE_MARKER);

    let seed = state.train.seed;
    let end = state.step + steps;
    while state.step < end {
        let idx = batch_indices(state.step, batch, points.len(), seed);
        let refs: Vec<&DataPoint> = idx.iter().map(|&i| &points[i]).collect();
        let result = TrainingBatch::new(&refs, &model_cfg).and_then(|b| state.train_step(&b));
        let report = match result {
            Ok(r) => r,
            Err(e) => {
                log.flush()?;
                write_json(
                    &marker,
                    &serde_json::json!({ "failed_at_step": state.step, "error": e.to_string() }),
                )?;
                bail!("training stopped at step {}: {e}; the last saved checkpoint is still in {}", state.step, args.out.display());
            }
        };
        serde_json::to_writer(&mut log, &report)?;
        log.write_all(b"\n")?;
        if report.step % 10 == 0 {
            tracing::info!(
                step = report.step,
                d = report.d_loss,
                g = report.g_loss,
                fm = report.g_feature_matching,
                "trained"
            );
        }
        if every > 0 && state.step % every == 0 && state.step < end {
            log.flush()?;
            save_checkpoint(&state, &args.out)?;
        }
    }
    log.flush()?;
    save_checkpoint(&state, &args.out)?;
    let _ = fs::remove_file(&marker);
    println!("trained to step {}; checkpoint and {LOSS_LOG} in {}", state.step, args.out.display());
    Ok(())
}

pub fn evaluate(config: &AppConfig, args: &EvaluateArgs) -> anyhow::Result<()> {
    let (model, _) = load_model(&args.checkpoint)?;
    let dataset = open_dataset(&args.dataset)?;
    let test = load_points(&dataset, Split::Test)?;
    check_compatible(&test, &model.config)?;
    let train_points = load_points(&dataset, Split::Train)?;
    let segmenter = PrototypeSegmenter::fit(&train_points)?;
    let seed = args.seed.unwrap_or(config.train.seed);
    let extractor = RandomProjection::new(seed, 32, args.feature_dim)?;
    let options = EvalOptions {
        exclude_bus: !args.include_bus,
        seed,
        ..EvalOptions::default()
    };
    let report = evaluate_model(&model, &test, &extractor, &segmenter, &options)?;
    report.write(&args.out)?;
    println!(
        "fid {:.3}  mIoU {}  accuracy {}  ({} images, {} failed) -> {}",
        report.fid,
        report.mean_iou.map_or("n/a".into(), |v| format!("{v:.4}")),
        report.mean_accuracy.map_or("n/a".into(), |v| format!("{v:.4}")),
        report.images_evaluated,
        report.images_failed,
        args.out.display()
    );
    Ok(())
}

#[derive(Debug, Serialize)]
struct ConversionError {
    frame: usize,
    time: f64,
    vehicle: usize,
    id: Option<String>,
    message: String,
}

pub fn sumo_convert(config: &AppConfig, args: &SumoConvertArgs) -> anyhow::Result<()> {
    let corr = LaneCorrespondence::read(&args.lanes)?;
    let hist: BBoxHistogram = match (&args.histogram, &args.dataset) {
        (Some(path), _) => load_config(path)?,
        (None, Some(dir)) => load_config(&dir.join(HISTOGRAM_FILE))
            .with_context(|| format!("{} has no {HISTOGRAM_FILE}; rebuild it with build-dataset", dir.display()))?,
        (None, None) => bail!("box sizes need --histogram FILE or --dataset DIR"),
    };
    let variant = args.variant.unwrap_or(config.model.variant);
    let draw = args.seed.map_or(SizeDraw::Median, SizeDraw::Seeded);
    let frames = group_frames(read_vehicle_states(&args.frames)?);

    fs::create_dir_all(&args.out).with_context(|| format!("creating {}", args.out.display()))?;
    let mut errors = Vec::new();
    for (i, frame) in frames.iter().enumerate() {
        let scene = sim_frame_to_scene(frame, &corr, &hist, variant, draw)
            .with_context(|| format!("frame {i} at t={}", frame.time))?;
        for e in scene.errors {
            tracing::warn!(frame = i, vehicle = e.index, error = %e.message, "vehicle skipped");
            errors.push(ConversionError {
                frame: i,
                time: frame.time,
                vehicle: e.index,
                id: e.id,
                message: e.message,
            });
        }
        let mut request = SceneRequest::from_entities(&scene.entities, frame.time, None);
        request.variant = Some(variant.to_string());
        write_json(&args.out.join(format!("frame-{i:05}.json")), &request)?;
    }
    let error_path = args.out.join("errors.json");
    if errors.is_empty() {
        let _ = fs::remove_file(&error_path);
    } else {
        write_json(&error_path, &errors)?;
    }
    println!(
        "wrote {} scenes to {}; {} vehicles skipped{}",
        frames.len(),
        args.out.display(),
        errors.len(),
        if errors.is_empty() { "" } else { ", see errors.json" }
    );
    Ok(())
}

fn model_for(config: &AppConfig, checkpoint: Option<&Path>) -> anyhow::Result<(TrafficModel, u64)> {
    match checkpoint {
        Some(dir) => {
            let (model, meta) = load_model(dir)?;
            Ok((model, meta.step))
        }
        None => {
            tracing::warn!("no checkpoint given; using untrained weights");
            Ok((TrafficModel::new(&config.model, config.train.seed)?, 0))
        }
    }
}

pub fn generate(config: &AppConfig, args: &GenerateArgs) -> anyhow::Result<()> {
    let (model, _) = model_for(config, args.checkpoint.as_deref())?;
    let text = fs::read_to_string(&args.scene).with_context(|| format!("reading {}", args.scene.display()))?;
    let request: SceneRequest =
        serde_json::from_str(&text).with_context(|| format!("parsing {}", args.scene.display()))?;
    let mut scene = match request.validate(model.config.variant) {
        Ok(s) => s,
        Err(errors) => {
            let lines: Vec<String> = errors.iter().map(|e| format!("  {}: {}", e.field, e.message)).collect();
            bail!("{} is not a valid scene:\n{}", args.scene.display(), lines.join("\n"));
        }
    };
    if let Some(seed) = args.seed {
        scene.seed = seed;
    }
    let image = generate_image(&model, &scene.entities, scene.time, scene.seed)?;
    let png = encode_png(&image)?;
    let mut file = File::create(&args.out).with_context(|| format!("creating {}", args.out.display()))?;
    file.write_all(&png)?;
    println!("wrote {} ({}x{}, seed {})", args.out.display(), image.width(), image.height(), scene.seed);
    Ok(())
}

pub async fn serve_command(config: &AppConfig, args: &ServeArgs) -> anyhow::Result<()> {
    let addr = args.addr.unwrap_or(config.serve.addr);
    let queue = args.queue.unwrap_or(config.serve.queue);
    let state = match args.checkpoint.as_ref().or(config.serve.checkpoint.as_ref()) {
        Some(dir) => {
            let (model, meta) = load_model(dir)?;
            AppState::with_model(model, meta.step, queue)?
        }
        None => {
            tracing::warn!("no checkpoint given; /generate will answer 503");
            AppState::empty()
        }
    };
    serve(state, addr).await
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn lattice_argument() {
        assert_eq!(parse_lattice("20x20"), Ok((20, 20)));
        assert_eq!(parse_lattice("4X6"), Ok((4, 6)));
        assert!(parse_lattice("20").is_err());
    }

    #[test]
    fn batches_cover_each_epoch_once() {
        let n = 10;
        let mut seen: Vec<usize> = (0..5).flat_map(|s| batch_indices(s, 2, n, 3)).collect();
        seen.sort();
        assert_eq!(seen, (0..n).collect::<Vec<_>>());
        assert_eq!(batch_indices(7, 4, n, 3), batch_indices(7, 4, n, 3));
    }

    #[test]
    fn flags_beat_env_beat_file() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("c.toml");
        fs::write(&path, "[schedule]\nsteps = 5\n[serve]\nqueue = 3\n").unwrap();
        let cli = Cli::try_parse_from(["trafficgen", "--config", path.to_str().unwrap(), "serve"]).unwrap();
        let cfg = cli.app_config().unwrap();
        assert_eq!(cfg.schedule.steps, 5);
        assert_eq!(cfg.serve.queue, 3);
        assert_eq!(cfg.train, TrainConfig::default());
        let Command::Serve(a) = Cli::try_parse_from(["trafficgen", "serve", "--queue", "9"]).unwrap().command else {
            panic!()
        };
        assert_eq!(a.queue.unwrap_or(cfg.serve.queue), 9);
    }
}
