//! Command-line interface behind the `mvas` binary.

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Serialize;

use crate::analysis::{analyze_point, grid_points, MapLookup, PointReport};
use crate::error::{Error, Result};
use crate::eval::{
    chamfer, fscore, marching_cubes, normal_errors, render_maps, write_obj, BoundingBox,
    FieldCaster, Metrics,
};
use crate::field::{read_checkpoint, write_checkpoint, AnalyticShape, Architecture, FieldParams};
use crate::geom::{
    azimuth_of_normal, normalize_cameras, Camera, NormalizationRecord, RankTolerance, Vec3,
};
use crate::io::{self, Dataset, Manifest, ViewFiles, CAMERAS_FILE, MANIFEST_FILE};
use crate::maps::{AzimuthMap, DepthMap, NormalMap};
use crate::synth::{
    export_dataset, make_rig, render_views, AmbiguityMode, DatasetInfo, RenderSettings, RigKind,
    RigSpec, DEFAULT_HALF_PI_PROBABILITY,
};
use crate::train::{
    save_loss_csv, AlphaSchedule, IntersectionMode, TrainConfig, Trainer, TrainingViews, TscMode,
};

pub const EXIT_INPUT: u8 = 2;
pub const EXIT_NUMERIC: u8 = 3;

pub const MODEL_FILE: &str = "model.ckpt";
pub const CONFIG_FILE: &str = "config.json";
pub const LOSS_FILE: &str = "loss.csv";
pub const MESH_FILE: &str = "mesh.obj";
pub const METRICS_FILE: &str = "metrics.json";

/// Neural surface reconstruction from multi-view azimuth maps.
///
/// Full-scale runs use 612×512 images; 64×64 is enough for smoke tests.
#[derive(Debug, Parser)]
#[command(name = "mvas", version)]
pub struct Cli {
    /// Seed for every random stream; overrides the seed in --config.
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Worker threads (default: all cores).
    #[arg(long, global = true)]
    pub threads: Option<usize>,
    /// Training configuration as JSON; command-line flags take precedence.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Render a synthetic dataset from an analytic shape.
    Synth(SynthArgs),
    /// Optimize a neural field on a dataset.
    Train(TrainArgs),
    /// Extract a mesh and render normal, mask and depth maps from a checkpoint.
    Reconstruct(ReconstructArgs),
    /// Compare a reconstruction against ground truth.
    Eval(EvalArgs),
    /// Report tangent-stack ranks at query points.
    TscAnalyze(TscArgs),
    /// Write a copy of a dataset with normalized cameras.
    NormalizeCameras(NormalizeArgs),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum ShapeKind {
    Sphere,
    Torus,
    RoundedBox,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum RigArg {
    GenericRing,
    TwoView,
    ParallelAxes,
    CoplanarAxes,
}

impl From<RigArg> for RigKind {
    fn from(r: RigArg) -> Self {
        match r {
            RigArg::GenericRing => RigKind::GenericRing,
            RigArg::TwoView => RigKind::TwoView,
            RigArg::ParallelAxes => RigKind::ParallelAxes,
            RigArg::CoplanarAxes => RigKind::CoplanarAxes,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum AmbiguityArg {
    Exact,
    PiRandom,
    HalfPiRandom,
}

#[derive(Debug, Args)]
pub struct SynthArgs {
    #[arg(long, value_enum, default_value_t = ShapeKind::Sphere)]
    pub shape: ShapeKind,
    /// Shape center as x,y,z.
    #[arg(long, value_delimiter = ',', num_args = 3, default_values_t = [0.0, 0.0, 0.0])]
    pub center: Vec<f64>,
    /// Sphere radius.
    #[arg(long, default_value_t = 0.5)]
    pub radius: f64,
    /// Torus axis as x,y,z.
    #[arg(long, value_delimiter = ',', num_args = 3, default_values_t = [0.0, 0.0, 1.0])]
    pub axis: Vec<f64>,
    #[arg(long, default_value_t = 0.5)]
    pub major: f64,
    #[arg(long, default_value_t = 0.2)]
    pub minor: f64,
    /// Rounded-box half extents as x,y,z.
    #[arg(long, value_delimiter = ',', num_args = 3, default_values_t = [0.4, 0.3, 0.3])]
    pub half_extents: Vec<f64>,
    #[arg(long, default_value_t = 0.05)]
    pub corner_radius: f64,
    #[arg(long, value_enum, default_value_t = RigArg::GenericRing)]
    pub rig: RigArg,
    #[arg(long, default_value_t = 12)]
    pub views: usize,
    /// Distance of the cameras from the target.
    #[arg(long, default_value_t = 2.5)]
    pub distance: f64,
    #[arg(long, default_value_t = 612)]
    pub width: u32,
    #[arg(long, default_value_t = 512)]
    pub height: u32,
    #[arg(long, value_enum, default_value_t = AmbiguityArg::Exact)]
    pub ambiguity: AmbiguityArg,
    /// Probability of a +π/2 offset for half-pi-random.
    #[arg(long, default_value_t = DEFAULT_HALF_PI_PROBABILITY)]
    pub half_pi_probability: f64,
    /// Standard deviation of Gaussian azimuth noise in radians.
    #[arg(long, default_value_t = 0.0)]
    pub noise_sigma: f64,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum TscArg {
    MultiView,
    HalfPi,
    SingleView,
}

impl From<TscArg> for TscMode {
    fn from(t: TscArg) -> Self {
        match t {
            TscArg::MultiView => TscMode::MultiView,
            TscArg::HalfPi => TscMode::HalfPi,
            TscArg::SingleView => TscMode::SingleView,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum AlphaArg {
    Halve,
    Constant,
    Double,
}

impl From<AlphaArg> for AlphaSchedule {
    fn from(a: AlphaArg) -> Self {
        match a {
            AlphaArg::Halve => AlphaSchedule::Halve,
            AlphaArg::Constant => AlphaSchedule::Constant,
            AlphaArg::Double => AlphaSchedule::Double,
        }
    }
}

#[derive(Debug, Args)]
pub struct TrainArgs {
    /// Dataset directory containing manifest.json.
    #[arg(long)]
    pub data: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long)]
    pub epochs: Option<usize>,
    /// Stop after this many iterations.
    #[arg(long)]
    pub iterations: Option<usize>,
    #[arg(long)]
    pub batch_size: Option<usize>,
    #[arg(long)]
    pub lr: Option<f64>,
    /// Hidden layer width.
    #[arg(long)]
    pub width: Option<usize>,
    /// Positional-encoding frequencies.
    #[arg(long)]
    pub frequencies: Option<usize>,
    #[arg(long, value_enum)]
    pub tsc: Option<TscArg>,
    /// Move surface points with the parameters inside the TSC loss.
    #[arg(long)]
    pub differentiable: bool,
    #[arg(long, value_enum)]
    pub alpha_schedule: Option<AlphaArg>,
    #[arg(long)]
    pub dilation: Option<u32>,
    #[arg(long)]
    pub scale_ratio: Option<f64>,
    /// Continue from this checkpoint instead of the sphere initialization.
    #[arg(long)]
    pub resume: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct ReconstructArgs {
    #[arg(long)]
    pub checkpoint: PathBuf,
    /// Directory with manifest.json and cameras (a dataset or a training output).
    #[arg(long)]
    pub data: PathBuf,
    /// Marching-cubes samples per axis.
    #[arg(long, default_value_t = 256)]
    pub resolution: usize,
    /// Used when the manifest carries no normalization record.
    #[arg(long, default_value_t = 3.0)]
    pub scale_ratio: f64,
    /// Radius of the normalized scene bound.
    #[arg(long, default_value_t = 1.0)]
    pub bound: f64,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct EvalArgs {
    /// Reconstruction directory written by `reconstruct`.
    #[arg(long)]
    pub pred: PathBuf,
    /// Ground-truth dataset directory.
    #[arg(long)]
    pub gt: PathBuf,
    /// F-score distance threshold in world units.
    #[arg(long, default_value_t = 0.01)]
    pub tau: f64,
    /// Where to write the metrics JSON (default: <pred>/metrics.json).
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct TscArgs {
    #[arg(long)]
    pub data: PathBuf,
    /// Text file with one `x y z` point per line.
    #[arg(long, conflicts_with = "grid")]
    pub points: Option<PathBuf>,
    /// Sweep an N×N×N grid instead of reading points.
    #[arg(long)]
    pub grid: Option<usize>,
    /// Half edge length of the grid cube.
    #[arg(long, default_value_t = 1.0)]
    pub grid_half: f64,
    /// Count every view that projects the point, ignoring occlusion.
    #[arg(long)]
    pub ignore_occlusion: bool,
    /// Field used for occlusion when the dataset has no analytic shape.
    #[arg(long)]
    pub checkpoint: Option<PathBuf>,
    #[arg(long, default_value_t = RankTolerance::default().lo)]
    pub tol_lo: f64,
    #[arg(long, default_value_t = RankTolerance::default().hi)]
    pub tol_hi: f64,
    /// Also write the full report as JSON.
    #[arg(long)]
    pub json: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct NormalizeArgs {
    #[arg(long)]
    pub data: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
    /// Distance of the farthest camera after normalization.
    #[arg(long, default_value_t = 3.0)]
    pub scale_ratio: f64,
}

/// Process exit code for an error: numeric failures get their own code.
pub fn exit_code(error: &Error) -> u8 {
    if error.is_numeric() {
        EXIT_NUMERIC
    } else {
        EXIT_INPUT
    }
}

/// Parses `std::env::args`, runs the command and maps the outcome to an exit code.
pub fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_code(&e))
        }
    }
}

pub fn run(cli: Cli) -> Result<()> {
    if let Some(threads) = cli.threads {
        if threads == 0 {
            return Err(Error::Config("--threads must be at least 1".into()));
        }
        // a second call in the same process keeps the first pool
        let _ = rayon::ThreadPoolBuilder::new()
            .num_threads(threads)
            .build_global();
    }
    let seed = cli.seed;
    match cli.command {
        Command::Synth(args) => cmd_synth(&args, seed.unwrap_or(0)).map(|_| ()),
        Command::Train(args) => {
            let config = train_config(cli.config.as_deref(), &args, seed)?;
            cmd_train(&args, config)
        }
        Command::Reconstruct(args) => cmd_reconstruct(&args),
        Command::Eval(args) => cmd_eval(&args).map(|_| ()),
        Command::TscAnalyze(args) => cmd_tsc_analyze(&args).map(|_| ()),
        Command::NormalizeCameras(args) => cmd_normalize(&args),
    }
}

fn vec3(v: &[f64]) -> Vec3 {
    Vec3::new(v[0], v[1], v[2])
}

fn shape_from_args(args: &SynthArgs) -> Result<AnalyticShape> {
    let center = vec3(&args.center);
    match args.shape {
        ShapeKind::Sphere => AnalyticShape::sphere(center, args.radius),
        ShapeKind::Torus => AnalyticShape::torus(center, vec3(&args.axis), args.major, args.minor),
        ShapeKind::RoundedBox => {
            AnalyticShape::rounded_box(center, vec3(&args.half_extents), args.corner_radius)
        }
    }
}

pub fn cmd_synth(args: &SynthArgs, seed: u64) -> Result<Manifest> {
    let shape = shape_from_args(args)?;
    let rig = RigSpec {
        radius: args.distance,
        target: shape.center().into(),
        ..RigSpec::new(args.rig.into(), args.views).with_resolution(args.width, args.height)
    };
    let cameras = make_rig(&rig)?;
    let ambiguity = match args.ambiguity {
        AmbiguityArg::Exact => AmbiguityMode::Exact,
        AmbiguityArg::PiRandom => AmbiguityMode::PiRandom,
        AmbiguityArg::HalfPiRandom => AmbiguityMode::HalfPiRandom {
            probability: args.half_pi_probability,
        },
    };
    let render = RenderSettings {
        ambiguity,
        noise_sigma: args.noise_sigma,
        seed,
    };
    let views = render_views(&shape, &cameras, &render)?;
    let info = DatasetInfo {
        seed,
        shape: Some(shape),
        rig: Some(rig),
        render: Some(render),
    };
    let manifest = export_dataset(&views, &args.out, &info)?;
    println!("wrote {} views to {}", views.len(), args.out.display());
    Ok(manifest)
}

/// Defaults, then the JSON file, then command-line flags.
pub fn train_config(
    path: Option<&Path>,
    args: &TrainArgs,
    seed: Option<u64>,
) -> Result<TrainConfig> {
    let mut c: TrainConfig = match path {
        Some(p) => io::read_json(p)?,
        None => TrainConfig::default(),
    };
    if let Some(s) = seed {
        c.seed = s;
    }
    if let Some(v) = args.epochs {
        c.epochs = v;
    }
    if args.iterations.is_some() {
        c.max_iterations = args.iterations;
    }
    if let Some(v) = args.batch_size {
        c.batch_size = v;
    }
    if let Some(v) = args.lr {
        c.lr = v;
    }
    if let Some(w) = args.width {
        c.architecture = Architecture {
            hidden_width: w,
            ..c.architecture
        };
    }
    if let Some(f) = args.frequencies {
        c.architecture.frequencies = f;
    }
    if let Some(t) = args.tsc {
        c.tsc_mode = t.into();
    }
    if args.differentiable {
        c.intersection_mode = IntersectionMode::Differentiable;
    }
    if let Some(a) = args.alpha_schedule {
        c.alpha_schedule = a.into();
    }
    if let Some(d) = args.dilation {
        c.dilation_iterations = d;
    }
    if let Some(s) = args.scale_ratio {
        c.scale_ratio = s;
    }
    c.validate()?;
    Ok(c)
}

fn create_dir(dir: &Path) -> Result<()> {
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))
}

/// Manifest of a training run: normalized cameras stored next to it, maps
/// referenced by absolute path, and the normalization record.
fn training_manifest(dataset: &Dataset, record: NormalizationRecord) -> Result<Manifest> {
    let mut manifest = dataset.absolute_manifest()?;
    manifest.cameras = CAMERAS_FILE.to_string();
    for v in &mut manifest.views {
        // depths are in world units and would disagree with the normalized cameras
        v.depth = None;
    }
    manifest.normalization = Some(record);
    Ok(manifest)
}

pub fn cmd_train(args: &TrainArgs, config: TrainConfig) -> Result<()> {
    let dataset = Dataset::load(&args.data)?;
    let (views, record) =
        TrainingViews::from_dataset(&dataset, config.scale_ratio, config.dilation_iterations)?;
    create_dir(&args.out)?;
    io::write_cameras(&args.out.join(CAMERAS_FILE), &views.cameras)?;
    io::write_json(
        &args.out.join(MANIFEST_FILE),
        &training_manifest(&dataset, record)?,
    )?;
    io::write_json(&args.out.join(CONFIG_FILE), &config)?;

    let mut trainer = match &args.resume {
        Some(p) => Trainer::with_params(config, views, read_checkpoint(p)?)?,
        None => Trainer::new(config, views)?,
    };
    let out = args.out.clone();
    let outcome = trainer.run(|t, epoch| {
        let last = t.log().last().expect("a step was taken");
        println!(
            "epoch {epoch} iteration {} loss {:.6e} (tsc {:.3e}, silhouette {:.3e}, eikonal {:.3e})",
            last.iteration, last.loss.total, last.loss.tsc, last.loss.silhouette, last.loss.eikonal
        );
        write_checkpoint(&out.join(format!("epoch_{epoch:03}.ckpt")), t.params())?;
        write_checkpoint(&out.join(MODEL_FILE), t.params())
    });
    // the parameters are only updated after a finite step, so they are safe to keep
    write_checkpoint(&args.out.join(MODEL_FILE), trainer.params())?;
    save_loss_csv(&args.out.join(LOSS_FILE), trainer.log())?;
    outcome
}

/// Cameras in the normalized scene and the record that maps it back to world units.
fn normalized_cameras(
    dataset: &Dataset,
    scale_ratio: f64,
) -> Result<(Vec<Camera>, NormalizationRecord)> {
    match dataset.manifest.normalization {
        Some(record) => Ok((dataset.cameras.clone(), record)),
        None => {
            let n = normalize_cameras(&dataset.cameras, scale_ratio)?;
            Ok((n.cameras, n.record))
        }
    }
}

pub fn cmd_reconstruct(args: &ReconstructArgs) -> Result<()> {
    let params = read_checkpoint(&args.checkpoint)?;
    let dataset = Dataset::load(&args.data)?;
    let (cameras, record) = normalized_cameras(&dataset, args.scale_ratio)?;
    create_dir(&args.out)?;
    let mesh = reconstruct_mesh(&params, args.bound, args.resolution)?.to_world(&record);
    write_obj(&args.out.join(MESH_FILE), &mesh)?;

    let world_cameras: Vec<Camera> = cameras
        .iter()
        .map(|c| world_camera(c, &record))
        .collect::<Result<_>>()?;
    let caster = FieldCaster::new(&params, args.bound);
    let mut manifest = Manifest {
        cameras: CAMERAS_FILE.to_string(),
        views: Vec::new(),
        normalization: None,
        shape: None,
        rig: None,
        ambiguity: None,
        ..dataset.manifest.clone()
    };
    for (i, (camera, world)) in cameras.iter().zip(&world_cameras).enumerate() {
        let maps = render_maps(&caster, camera);
        let depth = DepthMap::from_vec(
            camera.width(),
            camera.height(),
            maps.depth
                .data()
                .iter()
                .map(|d| d.map(|t| t * record.scale))
                .collect(),
        )?;
        let files = ViewFiles::standard(i, true);
        let azimuth = azimuths_from_normals(&maps.normals, world)?;
        io::write_azimuth(&args.out.join(&files.azimuth), &azimuth)?;
        io::write_mask(&args.out.join(&files.mask), &maps.mask)?;
        io::write_normals(
            &args
                .out
                .join(files.normals.as_ref().expect("standard files")),
            &maps.normals,
        )?;
        io::write_depth(
            &args.out.join(files.depth.as_ref().expect("standard files")),
            &depth,
        )?;
        manifest.views.push(files);
    }
    io::write_cameras(&args.out.join(CAMERAS_FILE), &world_cameras)?;
    io::write_json(&args.out.join(MANIFEST_FILE), &manifest)?;
    println!(
        "mesh with {} vertices and {} triangles, {} views written to {}",
        mesh.vertices.len(),
        mesh.triangles.len(),
        cameras.len(),
        args.out.display()
    );
    Ok(())
}

/// Zero level set of `field` inside the cube enclosing the scene bound.
pub fn reconstruct_mesh(
    params: &FieldParams,
    bound: f64,
    resolution: usize,
) -> Result<crate::eval::Mesh> {
    marching_cubes(params, BoundingBox::cube(bound), resolution)
}

fn world_camera(camera: &Camera, record: &NormalizationRecord) -> Result<Camera> {
    let center = record.to_world(&camera.center());
    let pose = crate::geom::CameraPose::from_center(*camera.pose.rotation(), center)?;
    Ok(Camera::new(camera.intrinsics, pose))
}

fn azimuths_from_normals(normals: &NormalMap, camera: &Camera) -> Result<AzimuthMap> {
    let values = normals
        .data()
        .iter()
        .map(|n| {
            n.and_then(|n| azimuth_of_normal(&camera.pose, &n).ok())
                .unwrap_or(f64::NAN)
        })
        .collect();
    AzimuthMap::from_values(normals.width(), normals.height(), values)
}

/// Metrics of one reconstruction together with the per-view normal errors.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EvalReport {
    #[serde(flatten)]
    pub metrics: Metrics,
    pub tau: f64,
    pub per_view_mae_deg: Vec<Option<f64>>,
    /// Fraction of ground-truth surface pixels with a predicted normal.
    pub normal_coverage: f64,
}

/// World points seen through every pixel with a depth value.
pub fn depth_points(cameras: &[Camera], depths: &[DepthMap]) -> Vec<Vec3> {
    let mut out = Vec::new();
    for (camera, depth) in cameras.iter().zip(depths) {
        for (col, row, d) in depth.pixels() {
            if let Some(t) = d {
                let (origin, dir) = camera.pixel_ray(col, row);
                out.push(origin + dir * *t);
            }
        }
    }
    out
}

fn ground_truth(dataset: &Dataset) -> Result<(&[NormalMap], &[DepthMap])> {
    let root = dataset.root.display();
    match (&dataset.gt_normals, &dataset.gt_depths) {
        (Some(n), Some(d)) => Ok((n, d)),
        _ => Err(Error::Dataset(format!(
            "{root} lacks normal or depth maps for every view"
        ))),
    }
}

pub fn evaluate_datasets(pred: &Dataset, gt: &Dataset, tau: f64) -> Result<EvalReport> {
    if pred.view_count() != gt.view_count() {
        return Err(Error::ShapeMismatch(format!(
            "prediction has {} views, ground truth {}",
            pred.view_count(),
            gt.view_count()
        )));
    }
    let (pred_normals, pred_depths) = ground_truth(pred)?;
    let (gt_normals, gt_depths) = ground_truth(gt)?;
    let pred_points = depth_points(&pred.cameras, pred_depths);
    let gt_points = depth_points(&gt.cameras, gt_depths);
    let cd = chamfer(&pred_points, &gt_points)?;
    let f = fscore(&pred_points, &gt_points, tau)?;
    let mut all = Vec::new();
    let mut per_view = Vec::new();
    let mut surface = 0usize;
    for ((p, g), mask) in pred_normals.iter().zip(gt_normals).zip(&gt.masks) {
        let errors = normal_errors(p, g, mask)?;
        surface += g
            .data()
            .iter()
            .zip(mask.data())
            .filter(|(n, m)| **m && n.is_some())
            .count();
        per_view
            .push((!errors.is_empty()).then(|| errors.iter().sum::<f64>() / errors.len() as f64));
        all.extend(errors);
    }
    if all.is_empty() {
        return Err(Error::Metric(
            "no pixel has both a predicted and a reference normal".into(),
        ));
    }
    Ok(EvalReport {
        metrics: Metrics {
            chamfer: cd,
            precision: f.precision,
            recall: f.recall,
            fscore: f.fscore,
            mae_deg: all.iter().sum::<f64>() / all.len() as f64,
        },
        tau,
        per_view_mae_deg: per_view,
        normal_coverage: all.len() as f64 / surface.max(1) as f64,
    })
}

pub fn cmd_eval(args: &EvalArgs) -> Result<EvalReport> {
    let pred = Dataset::load(&args.pred)?;
    let gt = Dataset::load(&args.gt)?;
    let report = evaluate_datasets(&pred, &gt, args.tau)?;
    for (i, mae) in report.per_view_mae_deg.iter().enumerate() {
        match mae {
            Some(m) => println!("view {i:3}  mae {m:8.3} deg"),
            None => println!("view {i:3}  mae        -"),
        }
    }
    let m = &report.metrics;
    println!(
        "chamfer {:.6}  precision {:.4}  recall {:.4}  fscore {:.4}  mae {:.3} deg",
        m.chamfer, m.precision, m.recall, m.fscore, m.mae_deg
    );
    let out = args
        .out
        .clone()
        .unwrap_or_else(|| args.pred.join(METRICS_FILE));
    io::write_json(&out, &report)?;
    Ok(report)
}

fn read_points(path: &Path) -> Result<Vec<Vec3>> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let mut out = Vec::new();
    for (i, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let c: Vec<f64> = line
            .split(|ch: char| ch.is_whitespace() || ch == ',')
            .filter(|s| !s.is_empty())
            .map(str::parse)
            .collect::<std::result::Result<_, _>>()
            .map_err(|_| Error::format(path, format!("line {}: bad number", i + 1)))?;
        if c.len() != 3 {
            return Err(Error::format(
                path,
                format!("line {}: expected x y z", i + 1),
            ));
        }
        out.push(vec3(&c));
    }
    Ok(out)
}

enum Occluder {
    None,
    Shape(AnalyticShape),
    /// A trained field with the normalized cameras and the record mapping
    /// query points into its frame.
    Field(FieldParams, Vec<Camera>, NormalizationRecord),
}

pub fn cmd_tsc_analyze(args: &TscArgs) -> Result<Vec<PointReport>> {
    let dataset = Dataset::load(&args.data)?;
    let points = match (&args.points, args.grid) {
        (Some(p), _) => read_points(p)?,
        (None, Some(n)) if n > 0 => grid_points(n, args.grid_half),
        _ => return Err(Error::Config("pass --points FILE or --grid N".into())),
    };
    let tolerance = RankTolerance {
        lo: args.tol_lo,
        hi: args.tol_hi,
    };
    let occluder = if args.ignore_occlusion {
        Occluder::None
    } else if let Some(p) = &args.checkpoint {
        let params = read_checkpoint(p)?;
        match dataset.manifest.normalization {
            // points are already given in the normalized scene
            Some(_) => Occluder::Field(
                params,
                dataset.cameras.clone(),
                NormalizationRecord::identity(),
            ),
            None => {
                let n = normalize_cameras(&dataset.cameras, TrainConfig::default().scale_ratio)?;
                Occluder::Field(params, n.cameras, n.record)
            }
        }
    } else if let Some(shape) = dataset.manifest.shape {
        Occluder::Shape(shape)
    } else {
        eprintln!("warning: no shape or checkpoint for occlusion; every projecting view counts");
        Occluder::None
    };
    let lookup = MapLookup {
        azimuths: &dataset.azimuths,
        masks: &dataset.masks,
    };
    let reports: Vec<PointReport> = points
        .iter()
        .map(|x| match &occluder {
            Occluder::None => {
                analyze_point::<AnalyticShape>(x, &dataset.cameras, &lookup, None, tolerance)
            }
            Occluder::Shape(s) => analyze_point(x, &dataset.cameras, &lookup, Some(s), tolerance),
            Occluder::Field(f, cameras, record) => {
                let mut r = analyze_point(
                    &record.to_normalized(x),
                    cameras,
                    &lookup,
                    Some(f),
                    tolerance,
                );
                r.point = (*x).into();
                r
            }
        })
        .collect();
    if reports.iter().all(|r| r.contributing == 0) {
        eprintln!("warning: no query point is seen by any view");
    }
    println!(
        "{:>10} {:>10} {:>10}  views  {:>10} {:>10} {:>10}  class         normal",
        "x", "y", "z", "s1", "s2", "s3"
    );
    for r in &reports {
        let [x, y, z] = r.point;
        let sv = r
            .singular_values
            .map_or("         -          -          -".to_string(), |s| {
                format!("{:10.3e} {:10.3e} {:10.3e}", s[0], s[1], s[2])
            });
        let class = r.class.map_or("-".to_string(), |c| format!("{c:?}"));
        let normal = r.normal.map_or(String::new(), |n| {
            format!("{:.4} {:.4} {:.4}", n[0], n[1], n[2])
        });
        println!(
            "{x:10.4} {y:10.4} {z:10.4}  {:5}  {sv}  {class:<12}  {normal}",
            r.contributing
        );
    }
    if let Some(path) = &args.json {
        io::write_json(path, &reports)?;
    }
    Ok(reports)
}

pub fn cmd_normalize(args: &NormalizeArgs) -> Result<()> {
    let dataset = Dataset::load(&args.data)?.normalized(args.scale_ratio)?;
    dataset.write(&args.out)?;
    let r = dataset.manifest.normalization.expect("just normalized");
    println!(
        "offset {:.6} {:.6} {:.6}  scale {:.6}  (scale ratio {})",
        r.offset[0], r.offset[1], r.offset[2], r.scale, r.scale_ratio
    );
    Ok(())
}
