//! The `growl` command line.
//!
//! Every command writes its outputs plus a `manifest.json` into `--out`.
//! Exit codes: 0 on success, 1 on runtime failure, 2 on invalid
//! configuration or usage.

use std::fs;
use std::path::{Path, PathBuf};
use std::time::Instant;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::{Deserialize, Serialize};

use crate::evaluation::{evaluate, EvalConfig};
use crate::graph::FeatureMode;
use crate::grouping::ScenePrediction;
use crate::io::{write_atomic, write_json};
use crate::model::{GrowlModel, ModelConfig};
use crate::projection::{
    project_topdown, DepthImage, DetectionFrame, ProjectionError, ProjectionMode,
};
use crate::render::render_scene;
use crate::scene::{
    load_dataset, save_dataset, split_dataset, Dataset, Format, Individual, Scene, Units, ViewTag,
};
use crate::synth::{generate_corpus, SynthConfig};
use crate::trainer::{
    grid_search, predict_dataset, repeat_experiment, train_on_scenes, GridSpec, TrainConfig,
};

#[derive(Debug, Parser)]
#[command(
    name = "growl",
    version,
    about = "Interaction-group detection with graph link prediction"
)]
pub struct Cli {
    /// Seed for every random choice the command makes; overrides the config file.
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// JSON run configuration (see `RunConfig`).
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Output directory.
    #[arg(long, global = true, default_value = "out")]
    pub out: PathBuf,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Generate a synthetic corpus into OUT/dataset.json.
    Synth {
        #[arg(long)]
        scenes: Option<usize>,
    },
    /// Project egocentric detections onto the top-down plane.
    Project(ProjectArgs),
    /// Split a dataset, train on the first part, and save the model.
    Train(TrainArgs),
    /// Predict groups for every scene of a dataset.
    Predict {
        #[arg(long)]
        model: PathBuf,
        #[arg(long)]
        data: PathBuf,
        #[arg(long)]
        threshold: Option<f64>,
    },
    /// Score predictions against ground truth.
    Eval {
        #[arg(long)]
        predictions: PathBuf,
        #[arg(long)]
        data: PathBuf,
        #[arg(long)]
        tolerance: Option<f64>,
    },
    /// Repeated k-fold search over embedding size and epoch count.
    Gridsearch {
        #[arg(long)]
        data: PathBuf,
        #[arg(long)]
        folds: Option<usize>,
        #[arg(long)]
        repeats: Option<usize>,
        #[arg(long, value_delimiter = ',')]
        embed_sizes: Option<Vec<usize>>,
        #[arg(long, value_delimiter = ',')]
        epochs: Option<Vec<usize>>,
    },
    /// Independent split/train/evaluate runs.
    Repeat {
        #[arg(long)]
        data: PathBuf,
        #[arg(long)]
        runs: Option<usize>,
        #[arg(long)]
        train_fraction: Option<f64>,
    },
    /// Draw scenes, optionally with predicted edges, as SVG.
    Render {
        #[arg(long)]
        data: PathBuf,
        #[arg(long)]
        predictions: Option<PathBuf>,
        /// Render only this frame; all frames otherwise.
        #[arg(long)]
        frame: Option<String>,
    },
}

#[derive(Debug, Args)]
pub struct ProjectArgs {
    /// A sidecar file, a JSON array of sidecars, or a directory of sidecars.
    #[arg(long)]
    pub detections: PathBuf,
    /// Directory holding `<frame_id>.pgm` depth images.
    #[arg(long)]
    pub depth_dir: PathBuf,
    #[arg(long, value_enum)]
    pub mode: Option<ModeArg>,
    /// Horizontal field of view in radians, for `--mode pinhole`.
    #[arg(long)]
    pub hfov: Option<f64>,
    #[arg(long)]
    pub window: Option<u32>,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum ModeArg {
    Normalized,
    Pinhole,
}

#[derive(Debug, Args)]
pub struct TrainArgs {
    #[arg(long)]
    pub data: PathBuf,
    #[arg(long)]
    pub epochs: Option<usize>,
    #[arg(long)]
    pub embed_dim: Option<usize>,
    #[arg(long)]
    pub train_fraction: Option<f64>,
    /// Train on the whole dataset instead of splitting it.
    #[arg(long)]
    pub no_split: bool,
    /// Position-only node features.
    #[arg(long)]
    pub no_orientation: bool,
    /// Train on ground-truth edges only.
    #[arg(long)]
    pub no_negative_injection: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ProjectionSettings {
    pub mode: ProjectionMode,
    /// Odd side length of the depth sampling window.
    pub window: u32,
}

impl Default for ProjectionSettings {
    fn default() -> Self {
        ProjectionSettings {
            mode: ProjectionMode::Normalized,
            window: 5,
        }
    }
}

/// Everything a command may consult. The top-level `seed` replaces the
/// seeds inside the nested sections.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub seed: u64,
    pub train_fraction: f64,
    pub threshold: f64,
    pub runs: usize,
    pub synth: SynthConfig,
    pub model: ModelConfig,
    pub train: TrainConfig,
    pub eval: EvalConfig,
    pub grid: GridSpec,
    pub projection: ProjectionSettings,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            seed: 0,
            train_fraction: 0.6,
            threshold: crate::trainer::DEFAULT_THRESHOLD,
            runs: 10,
            synth: SynthConfig::default(),
            model: ModelConfig::default(),
            train: TrainConfig::default(),
            eval: EvalConfig::default(),
            grid: GridSpec::default(),
            projection: ProjectionSettings::default(),
        }
    }
}

impl RunConfig {
    fn propagate_seed(&mut self) {
        self.synth.seed = self.seed;
        self.train.seed = self.seed;
        self.grid.seed = self.seed;
    }

    pub fn validate(&self) -> Result<(), String> {
        self.synth.validate().map_err(|e| e.to_string())?;
        self.model.validate().map_err(|e| e.to_string())?;
        self.train.validate().map_err(|e| e.to_string())?;
        self.eval.validate().map_err(|e| e.to_string())?;
        if !(self.train_fraction > 0.0 && self.train_fraction < 1.0) {
            return Err(format!(
                "train_fraction must lie in (0, 1), got {}",
                self.train_fraction
            ));
        }
        if !(0.0..=1.0).contains(&self.threshold) {
            return Err(format!(
                "threshold must lie in [0, 1], got {}",
                self.threshold
            ));
        }
        if self.runs == 0 {
            return Err("runs must be >= 1".into());
        }
        let w = self.projection.window;
        if w == 0 || w.is_multiple_of(2) {
            return Err(format!("projection.window must be odd and >= 1, got {w}"));
        }
        if let ProjectionMode::Pinhole { hfov_rad } = self.projection.mode {
            if !(hfov_rad > 0.0 && hfov_rad < std::f64::consts::PI) {
                return Err(format!("hfov must lie in (0, pi), got {hfov_rad}"));
            }
        }
        Ok(())
    }
}

/// Written next to every command's outputs.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RunManifest {
    pub command: String,
    pub config: RunConfig,
    pub seed: u64,
    pub inputs: Vec<PathBuf>,
    pub outputs: Vec<PathBuf>,
    pub version: String,
    pub duration_secs: f64,
}

#[derive(Debug)]
pub struct Failure {
    pub code: i32,
    pub message: String,
}

impl Failure {
    fn invalid(message: impl Into<String>) -> Self {
        Failure {
            code: 2,
            message: message.into(),
        }
    }

    fn runtime(message: impl ToString) -> Self {
        Failure {
            code: 1,
            message: message.to_string(),
        }
    }
}

type CliResult<T> = Result<T, Failure>;

fn format_of(path: &Path) -> Format {
    match path.extension().and_then(|e| e.to_str()) {
        Some(ext) if ext.eq_ignore_ascii_case("csv") => Format::Csv,
        _ => Format::Json,
    }
}

fn load(path: &Path) -> CliResult<Dataset> {
    load_dataset(path, format_of(path)).map_err(Failure::runtime)
}

fn read_text(path: &Path) -> CliResult<String> {
    fs::read_to_string(path).map_err(|e| Failure::runtime(format!("{}: {e}", path.display())))
}

/// Collects output paths and writes them atomically.
struct Outputs {
    dir: PathBuf,
    written: Vec<PathBuf>,
}

impl Outputs {
    fn path(&mut self, name: &str) -> PathBuf {
        let p = self.dir.join(name);
        self.written.push(p.clone());
        p
    }

    fn text(&mut self, name: &str, text: &str) -> CliResult<()> {
        let p = self.path(name);
        write_atomic(&p, text.as_bytes())
            .map_err(|e| Failure::runtime(format!("{}: {e}", p.display())))
    }

    fn json<T: Serialize>(&mut self, name: &str, value: &T) -> CliResult<()> {
        let p = self.path(name);
        write_json(&p, value).map_err(|e| Failure::runtime(format!("{}: {e}", p.display())))
    }

    fn dataset(&mut self, name: &str, ds: &Dataset) -> CliResult<()> {
        let p = self.path(name);
        save_dataset(ds, &p, Format::Json).map_err(Failure::runtime)
    }
}

fn resolve_config(cli: &Cli) -> CliResult<RunConfig> {
    let mut cfg = match &cli.config {
        Some(path) => serde_json::from_str(&read_text(path)?)
            .map_err(|e| Failure::invalid(format!("{}: {e}", path.display())))?,
        None => RunConfig::default(),
    };
    if let Some(seed) = cli.seed {
        cfg.seed = seed;
    }
    apply_overrides(&mut cfg, &cli.command);
    cfg.propagate_seed();
    cfg.validate().map_err(Failure::invalid)?;
    Ok(cfg)
}

fn apply_overrides(cfg: &mut RunConfig, command: &Command) {
    match command {
        Command::Synth { scenes } => {
            if let Some(n) = scenes {
                cfg.synth.n_scenes = *n;
            }
        }
        Command::Project(a) => {
            match (a.mode, a.hfov) {
                (Some(ModeArg::Normalized), _) => cfg.projection.mode = ProjectionMode::Normalized,
                (Some(ModeArg::Pinhole), hfov) => {
                    let default_hfov = match cfg.projection.mode {
                        ProjectionMode::Pinhole { hfov_rad } => hfov_rad,
                        ProjectionMode::Normalized => f64::NAN,
                    };
                    cfg.projection.mode = ProjectionMode::Pinhole {
                        hfov_rad: hfov.unwrap_or(default_hfov),
                    };
                }
                (None, Some(hfov)) => {
                    if let ProjectionMode::Pinhole { .. } = cfg.projection.mode {
                        cfg.projection.mode = ProjectionMode::Pinhole { hfov_rad: hfov };
                    }
                }
                (None, None) => {}
            }
            if let Some(w) = a.window {
                cfg.projection.window = w;
            }
        }
        Command::Train(a) => {
            if let Some(e) = a.epochs {
                cfg.train.epochs = e;
            }
            if let Some(d) = a.embed_dim {
                cfg.model.embed_dim = d;
            }
            if let Some(f) = a.train_fraction {
                cfg.train_fraction = f;
            }
            if a.no_orientation {
                cfg.model.feature_mode = FeatureMode::PositionOnly;
            }
            if a.no_negative_injection {
                cfg.train.negative_injection = false;
            }
        }
        Command::Predict { threshold, .. } => {
            if let Some(t) = threshold {
                cfg.threshold = *t;
            }
        }
        Command::Eval { tolerance, .. } => {
            if let Some(t) = tolerance {
                cfg.eval.tolerance = *t;
            }
        }
        Command::Gridsearch {
            folds,
            repeats,
            embed_sizes,
            epochs,
            ..
        } => {
            if let Some(f) = folds {
                cfg.grid.folds = *f;
            }
            if let Some(r) = repeats {
                cfg.grid.repeats = *r;
            }
            if let Some(e) = embed_sizes {
                cfg.grid.embed_sizes = e.clone();
            }
            if let Some(e) = epochs {
                cfg.grid.epochs = e.clone();
            }
        }
        Command::Repeat {
            runs,
            train_fraction,
            ..
        } => {
            if let Some(r) = runs {
                cfg.runs = *r;
            }
            if let Some(f) = train_fraction {
                cfg.train_fraction = *f;
            }
        }
        Command::Render { .. } => {}
    }
}

fn command_name(c: &Command) -> &'static str {
    match c {
        Command::Synth { .. } => "synth",
        Command::Project(_) => "project",
        Command::Train(_) => "train",
        Command::Predict { .. } => "predict",
        Command::Eval { .. } => "eval",
        Command::Gridsearch { .. } => "gridsearch",
        Command::Repeat { .. } => "repeat",
        Command::Render { .. } => "render",
    }
}

/// Runs one parsed invocation and returns the manifest it wrote.
pub fn run(cli: &Cli) -> CliResult<RunManifest> {
    let started = Instant::now();
    let cfg = resolve_config(cli)?;
    fs::create_dir_all(&cli.out)
        .map_err(|e| Failure::runtime(format!("{}: {e}", cli.out.display())))?;
    let mut out = Outputs {
        dir: cli.out.clone(),
        written: Vec::new(),
    };
    let mut inputs: Vec<PathBuf> = cli.config.iter().cloned().collect();

    match &cli.command {
        Command::Synth { .. } => {
            let ds = generate_corpus(&cfg.synth).map_err(Failure::runtime)?;
            out.dataset("dataset.json", &ds)?;
        }
        Command::Project(a) => {
            inputs.extend([a.detections.clone(), a.depth_dir.clone()]);
            let ds = project_frames(&a.detections, &a.depth_dir, &cfg.projection)?;
            out.dataset("dataset.json", &ds)?;
        }
        Command::Train(a) => {
            inputs.push(a.data.clone());
            let ds = load(&a.data)?;
            let train_set = if a.no_split {
                ds
            } else {
                let (train_ds, test_ds) =
                    split_dataset(&ds, cfg.train_fraction, cfg.seed).map_err(Failure::runtime)?;
                out.dataset("train.json", &train_ds)?;
                out.dataset("test.json", &test_ds)?;
                train_ds
            };
            let outcome = train_on_scenes(&train_set.scenes, &cfg.train, &cfg.model)
                .map_err(Failure::runtime)?;
            let p = out.path("model.json");
            outcome.model.save(&p).map_err(Failure::runtime)?;
            out.text("train_log.jsonl", &outcome.log_jsonl())?;
        }
        Command::Predict { model, data, .. } => {
            inputs.extend([model.clone(), data.clone()]);
            let model = GrowlModel::load(model).map_err(Failure::runtime)?;
            let ds = load(data)?;
            let preds = predict_dataset(&model, &ds, cfg.threshold).map_err(Failure::runtime)?;
            out.json("predictions.json", &preds)?;
        }
        Command::Eval {
            predictions, data, ..
        } => {
            inputs.extend([predictions.clone(), data.clone()]);
            let preds = load_predictions(predictions)?;
            let ds = load(data)?;
            let sets: Vec<_> = preds
                .iter()
                .map(|p| (p.frame_id.clone(), p.group_set()))
                .collect();
            let report = evaluate(&sets, &ds, &cfg.eval).map_err(Failure::runtime)?;
            out.text("report.csv", &report.to_csv())?;
            out.json("summary.json", &report.summary())?;
            println!("mean_f1 {:.4} std_f1 {:.4}", report.mean_f1, report.std_f1);
        }
        Command::Gridsearch { data, .. } => {
            inputs.push(data.clone());
            let ds = load(data)?;
            let result = grid_search(&ds.scenes, &cfg.grid, &cfg.train, &cfg.model, &cfg.eval)
                .map_err(Failure::runtime)?;
            out.text("gridsearch.csv", &result.to_csv())?;
            let best = serde_json::json!({
                "embed_dim": result.best_embed_dim,
                "epochs": result.best_epochs,
            });
            out.json("best.json", &best)?;
            println!(
                "best embed_dim {} epochs {}",
                result.best_embed_dim, result.best_epochs
            );
        }
        Command::Repeat { data, .. } => {
            inputs.push(data.clone());
            let ds = load(data)?;
            let result = repeat_experiment(
                &ds,
                cfg.runs,
                cfg.train_fraction,
                &cfg.train,
                &cfg.model,
                &cfg.eval,
                cfg.seed,
            )
            .map_err(Failure::runtime)?;
            out.text("repeat.csv", &result.to_csv())?;
            out.json(
                "repeat_summary.json",
                &serde_json::json!({"mean_f1": result.mean_f1, "std_f1": result.std_f1, "runs": cfg.runs}),
            )?;
            println!("mean_f1 {:.4} std_f1 {:.4}", result.mean_f1, result.std_f1);
        }
        Command::Render {
            data,
            predictions,
            frame,
        } => {
            inputs.push(data.clone());
            inputs.extend(predictions.iter().cloned());
            let ds = load(data)?;
            let preds = match predictions {
                Some(p) => load_predictions(p)?,
                None => Vec::new(),
            };
            let scenes: Vec<&Scene> = match frame {
                Some(f) => vec![ds
                    .scene(f)
                    .ok_or_else(|| Failure::runtime(format!("unknown frame '{f}'")))?],
                None => ds.scenes.iter().collect(),
            };
            for s in scenes {
                let pred = preds.iter().find(|p| p.frame_id == s.frame_id);
                out.text(
                    &format!("{}.svg", file_safe(&s.frame_id)),
                    &render_scene(s, pred),
                )?;
            }
        }
    }

    let manifest = RunManifest {
        command: command_name(&cli.command).to_string(),
        seed: cfg.seed,
        config: cfg,
        inputs,
        outputs: out.written.clone(),
        version: env!("CARGO_PKG_VERSION").to_string(),
        duration_secs: started.elapsed().as_secs_f64(),
    };
    write_json(&cli.out.join("manifest.json"), &manifest).map_err(Failure::runtime)?;
    Ok(manifest)
}

fn load_predictions(path: &Path) -> CliResult<Vec<ScenePrediction>> {
    serde_json::from_str(&read_text(path)?)
        .map_err(|e| Failure::runtime(format!("{}: {e}", path.display())))
}

fn file_safe(frame_id: &str) -> String {
    frame_id
        .chars()
        .map(|c| {
            if c.is_ascii_alphanumeric() || "-_.".contains(c) {
                c
            } else {
                '_'
            }
        })
        .collect()
}

fn read_sidecars(path: &Path) -> CliResult<Vec<DetectionFrame>> {
    let parse = |p: &Path| -> CliResult<Vec<DetectionFrame>> {
        let text = read_text(p)?;
        let value: serde_json::Value = serde_json::from_str(&text)
            .map_err(|e| Failure::runtime(format!("{}: {e}", p.display())))?;
        let frames = if value.is_array() {
            serde_json::from_value(value)
        } else {
            serde_json::from_value(value).map(|f| vec![f])
        };
        frames.map_err(|e| Failure::runtime(format!("{}: {e}", p.display())))
    };
    if path.is_dir() {
        let mut files: Vec<PathBuf> = fs::read_dir(path)
            .map_err(|e| Failure::runtime(format!("{}: {e}", path.display())))?
            .filter_map(|e| e.ok().map(|e| e.path()))
            .filter(|p| p.extension().is_some_and(|e| e == "json"))
            .collect();
        files.sort();
        let mut frames = Vec::new();
        for f in files {
            frames.extend(parse(&f)?);
        }
        Ok(frames)
    } else {
        parse(path)
    }
}

/// Projects every sidecar frame using `<depth_dir>/<frame_id>.pgm`. Frames
/// with a detection lacking valid depth are skipped with a warning.
pub fn project_frames(
    detections: &Path,
    depth_dir: &Path,
    settings: &ProjectionSettings,
) -> CliResult<Dataset> {
    let mut scenes = Vec::new();
    for frame in read_sidecars(detections)? {
        let depth_path = depth_dir.join(format!("{}.pgm", frame.frame_id));
        if !depth_path.is_file() {
            return Err(Failure::runtime(format!(
                "missing depth image {}",
                depth_path.display()
            )));
        }
        let depth =
            DepthImage::read_pgm(&depth_path, frame.max_range_mm).map_err(Failure::runtime)?;
        if depth.width() != frame.img_width || depth.height() != frame.img_height {
            return Err(Failure::runtime(format!(
                "{} is {}x{}, sidecar says {}x{}",
                depth_path.display(),
                depth.width(),
                depth.height(),
                frame.img_width,
                frame.img_height
            )));
        }
        let mut individuals = Vec::with_capacity(frame.detections.len());
        let mut skipped = false;
        for det in &frame.detections {
            match project_topdown(det, &depth, frame.img_width, settings.mode, settings.window) {
                Ok((x, y)) => {
                    if det.theta.is_none() {
                        log::warn!(
                            "frame {}: detection {} has no orientation, using 0",
                            frame.frame_id,
                            det.id
                        );
                    }
                    individuals.push(Individual::new(
                        det.id.clone(),
                        x,
                        y,
                        det.theta.unwrap_or(0.0),
                    ));
                }
                Err(e @ ProjectionError::NoValidDepth { .. }) => {
                    log::warn!(
                        "frame {} skipped: detection {}: {e}",
                        frame.frame_id,
                        det.id
                    );
                    skipped = true;
                    break;
                }
                Err(e) => {
                    return Err(Failure::runtime(format!(
                        "frame {}: detection {}: {e}",
                        frame.frame_id, det.id
                    )))
                }
            }
        }
        if skipped {
            continue;
        }
        let scene = Scene {
            frame_id: frame.frame_id,
            view_tag: ViewTag::EgocentricDerived,
            individuals,
            groups: frame.groups,
        };
        scene.validate().map_err(Failure::runtime)?;
        scenes.push(scene);
    }
    let units = match settings.mode {
        ProjectionMode::Normalized => Units::Normalized,
        ProjectionMode::Pinhole { .. } => Units::Meters,
    };
    let name = detections
        .file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_else(|| "projected".into());
    Ok(Dataset::new(name, units, scenes))
}

/// Entry point for the binary; returns the process exit code.
pub fn main() -> i32 {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return e.exit_code();
        }
    };
    match run(&cli) {
        Ok(_) => 0,
        Err(f) => {
            eprintln!("error: {}", f.message);
            f.code
        }
    }
}
