//! Command-line front end. Exit codes: 0 success, 1 data or pipeline
//! error, 2 usage error.

use std::ffi::OsString;
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use clap::{Args, CommandFactory, Parser, Subcommand, ValueEnum};

use crate::associate::AssociationConfig;
use crate::bench::{run_scaling_benchmark, ScalingSpec};
use crate::grid::GridConfig;
use crate::ingest::{read_scene_file, validate_scene, write_scene};
use crate::pipeline::{compute_stats, export_manifests, run_pipeline, EfficiencyReport, PipelineConfig, RunRecord};
use crate::select::{SelectionConfig, WarmStartMode};
use crate::synth::{generate_scene, generate_trajectory, RigConfig, TrajectoryKind, TrajectorySpec, WorldSpec};

#[derive(Debug, Parser)]
#[command(name = "viewsel", version, about = "Cluster-wise camera selection for large multi-view stereo runs")]
pub struct Cli {
    /// Log progress to stderr (repeat for more detail).
    #[arg(short, long, action = clap::ArgAction::Count, global = true)]
    pub verbose: u8,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Cluster a scene, select cameras per cluster and write manifests.
    Run(RunArgs),
    /// Generate a synthetic scene file.
    Synth(SynthArgs),
    /// Time the pipeline on growing synthetic scenes and write a CSV report.
    Bench(BenchArgs),
    /// Print the statistics table of a saved run record.
    Stats(StatsArgs),
    /// Check a scene file and report warnings.
    Validate(ValidateArgs),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum WarmStartArg {
    Hint,
    Hardfix,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum KindArg {
    Straight,
    Intersecting,
    Roundabout,
}

#[derive(Debug, Clone, Args)]
pub struct PipelineArgs {
    /// Block size along x, meters.
    #[arg(long, default_value_t = 20.0)]
    pub block_x: f64,
    /// Block size along y, meters.
    #[arg(long, default_value_t = 20.0)]
    pub block_y: f64,
    /// Block overlap, meters.
    #[arg(long, default_value_t = 2.0)]
    pub overlap: f64,
    /// Spacing of the sampled point lattice, meters.
    #[arg(long, default_value_t = 1.0)]
    pub resolution: f64,
    /// Selected cameras required to see each cluster point.
    #[arg(long, default_value_t = 2)]
    pub n_vis: u32,
    /// Matchable selected partners required per selected camera.
    #[arg(long, default_value_t = 2)]
    pub n_match: u32,
    /// Lower clamp of the per-cluster minimum selection size.
    #[arg(long, default_value_t = 10)]
    pub n_low: usize,
    /// Upper clamp of the per-cluster minimum selection size.
    #[arg(long, default_value_t = 30)]
    pub n_high: usize,
    /// Fraction of cluster cameras used for the minimum selection size.
    #[arg(long, default_value_t = 0.15)]
    pub nmin_fraction: f64,
    /// Co-visible points needed for two cameras to be matchable.
    #[arg(long, default_value_t = 5)]
    pub match_threshold: u32,
    /// Maximum camera to cluster centroid distance, meters.
    #[arg(long, default_value_t = 40.0)]
    pub assoc_distance: f64,
    /// Maximum depth at which a point counts as seen, meters.
    #[arg(long, default_value_t = 50.0)]
    pub max_depth: f64,
    /// Clusters with fewer cameras are merged into a neighbor.
    #[arg(long, default_value_t = 10)]
    pub min_cluster_cams: usize,
    /// Seed the solver only (hint) or also fix the most visible cameras (hardfix).
    #[arg(long, value_enum, default_value_t = WarmStartArg::Hint)]
    pub warm_start: WarmStartArg,
    /// Wall-clock limit per cluster solve, seconds.
    #[arg(long, default_value_t = 60.0)]
    pub time_budget: f64,
    /// Deterministic search limit per cluster solve, in bitset word operations.
    #[arg(long, default_value_t = 50_000_000)]
    pub work_budget: u64,
    /// Worker threads (0 = all cores).
    #[arg(long, default_value_t = 0)]
    pub jobs: usize,
}

impl PipelineArgs {
    pub fn config(&self) -> PipelineConfig<f64> {
        PipelineConfig {
            grid: GridConfig {
                block_x: self.block_x,
                block_y: self.block_y,
                overlap: self.overlap,
                sample_resolution: self.resolution,
            },
            assoc: AssociationConfig {
                max_centroid_distance: self.assoc_distance,
                max_depth: self.max_depth,
                min_cluster_cameras: self.min_cluster_cams,
            },
            select: SelectionConfig {
                n_vis: self.n_vis,
                n_match: self.n_match,
                n_low: self.n_low,
                n_high: self.n_high,
                n_min_fraction: self.nmin_fraction,
                time_budget: self.time_budget,
                work_budget: self.work_budget,
                warm_start_mode: match self.warm_start {
                    WarmStartArg::Hint => WarmStartMode::Hint,
                    WarmStartArg::Hardfix => WarmStartMode::HardFix,
                },
            },
            match_threshold: self.match_threshold,
            parallelism: self.jobs,
        }
    }
}

#[derive(Debug, Args)]
pub struct RunArgs {
    /// Scene file to process.
    #[arg(long)]
    pub scene: PathBuf,
    /// Output directory for manifests, run record and statistics.
    #[arg(long, default_value = "viewsel_out")]
    pub out: PathBuf,
    #[command(flatten)]
    pub pipeline: PipelineArgs,
}

#[derive(Debug, Args)]
pub struct SynthArgs {
    /// Trajectory shape.
    #[arg(long, value_enum, default_value_t = KindArg::Straight)]
    pub kind: KindArg,
    /// Trajectory duration, seconds.
    #[arg(long, default_value_t = 60.0)]
    pub duration: f64,
    /// Vehicle speed, m/s.
    #[arg(long, default_value_t = 10.0)]
    pub speed: f64,
    /// Roundabout radius, meters.
    #[arg(long, default_value_t = 15.0)]
    pub radius: f64,
    /// Cameras on the rig.
    #[arg(long, default_value_t = 7)]
    pub n_cams: u32,
    /// Rig framerate, Hz.
    #[arg(long, default_value_t = 30.0)]
    pub framerate: f64,
    /// Keypoints per square meter of facade.
    #[arg(long, default_value_t = 0.5)]
    pub density: f64,
    /// Fraction of facade length without keypoints.
    #[arg(long, default_value_t = 0.0)]
    pub textureless: f64,
    /// Keypoint position noise, meters.
    #[arg(long, default_value_t = 0.05)]
    pub noise: f64,
    /// Random seed.
    #[arg(long, default_value_t = 1)]
    pub seed: u64,
    /// Scene file to write (stdout if omitted).
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct BenchArgs {
    /// Scene sizes in views, ascending.
    #[arg(long, value_delimiter = ',', default_value = "500,1000,2000,4000,8000")]
    pub sizes: Vec<usize>,
    /// Sizes at which the full pairwise similarity baseline is also timed.
    #[arg(long, value_delimiter = ',', default_value = "500,1000,2000")]
    pub baseline_sizes: Vec<usize>,
    /// Timing repetitions per size; the fastest is reported.
    #[arg(long, default_value_t = 1)]
    pub repeats: usize,
    /// Random seed.
    #[arg(long, default_value_t = 1)]
    pub seed: u64,
    /// CSV report to write (stdout if omitted).
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[command(flatten)]
    pub pipeline: PipelineArgs,
}

#[derive(Debug, Args)]
pub struct StatsArgs {
    /// Run record written by `run` (run.json).
    #[arg(long)]
    pub record: PathBuf,
    /// Print CSV instead of an aligned table.
    #[arg(long)]
    pub csv: bool,
}

#[derive(Debug, Args)]
pub struct ValidateArgs {
    /// Scene file to check.
    #[arg(long)]
    pub scene: PathBuf,
}

pub fn command() -> clap::Command {
    Cli::command()
}

fn write_output(path: Option<&Path>, bytes: &[u8]) -> Result<()> {
    match path {
        Some(p) => {
            if let Some(dir) = p.parent().filter(|d| !d.as_os_str().is_empty()) {
                fs::create_dir_all(dir).with_context(|| format!("{}", dir.display()))?;
            }
            fs::write(p, bytes).with_context(|| format!("{}", p.display()))
        }
        None => std::io::stdout().write_all(bytes).context("stdout"),
    }
}

fn run(args: &RunArgs) -> Result<()> {
    let scene = read_scene_file::<f64>(&args.scene).with_context(|| format!("{}", args.scene.display()))?;
    let out = run_pipeline(&scene, &args.pipeline.config())?;
    export_manifests(&out.manifests, &args.out)?;
    let record = serde_json::to_vec_pretty(&out.record)?;
    write_output(Some(&args.out.join("run.json")), &record)?;
    write_output(Some(&args.out.join("stats.txt")), out.stats.to_text().as_bytes())?;
    write_output(Some(&args.out.join("stats.csv")), out.stats.to_csv().as_bytes())?;
    print!("{}", out.stats.to_text());
    let e = EfficiencyReport::after_clustering(&out.record);
    println!(
        "efficiency: K = {:.2} {} sqrt(C) = {:.2}; pair comparisons {} clustered vs {} global",
        e.k,
        if e.holds { "<" } else { ">=" },
        e.sqrt_c,
        e.ops_clustered,
        e.ops_full
    );
    for w in &out.record.warnings {
        eprintln!("warning: {w}");
    }
    Ok(())
}

fn synth(args: &SynthArgs) -> Result<()> {
    let rig = RigConfig { framerate: args.framerate, ..RigConfig::with_cams(args.n_cams) };
    let spec = TrajectorySpec {
        kind: match args.kind {
            KindArg::Straight => TrajectoryKind::Straight,
            KindArg::Intersecting => TrajectoryKind::Intersecting,
            KindArg::Roundabout => TrajectoryKind::Roundabout,
        },
        duration: args.duration,
        speed: args.speed,
        radius: args.radius,
        seed: args.seed,
        ..TrajectorySpec::default()
    };
    let world = WorldSpec {
        density: args.density,
        textureless_fraction: args.textureless,
        noise_sigma: args.noise,
        seed: args.seed,
        ..WorldSpec::default()
    };
    let traj = generate_trajectory(&spec, &rig)?;
    let scene = generate_scene(&traj, &world, &rig)?;
    let mut buf = Vec::new();
    write_scene(&scene, &mut buf)?;
    write_output(args.out.as_deref(), &buf)?;
    if let Some(p) = &args.out {
        eprintln!("{}: {} cameras, {} keypoints", p.display(), scene.cameras().len(), scene.points().len());
    }
    Ok(())
}

fn bench(args: &BenchArgs) -> Result<()> {
    let spec = ScalingSpec {
        pipeline: args.pipeline.config(),
        baseline_sizes: args.baseline_sizes.clone(),
        repeats: args.repeats,
        ..ScalingSpec::default()
    };
    let report = run_scaling_benchmark(&args.sizes, &spec, args.seed)?;
    write_output(args.out.as_deref(), report.to_csv().as_bytes())
}

fn stats(args: &StatsArgs) -> Result<()> {
    let text = fs::read_to_string(&args.record).with_context(|| format!("{}", args.record.display()))?;
    let record: RunRecord =
        serde_json::from_str(&text).with_context(|| format!("{}: not a run record", args.record.display()))?;
    let table = compute_stats(&record);
    print!("{}", if args.csv { table.to_csv() } else { table.to_text() });
    Ok(())
}

fn validate(args: &ValidateArgs) -> Result<()> {
    let scene = read_scene_file::<f64>(&args.scene).with_context(|| format!("{}", args.scene.display()))?;
    let report = validate_scene(&scene);
    println!("cameras: {}", report.camera_count);
    println!("keypoints: {}", report.keypoint_count);
    for w in &report.warnings {
        println!("warning: {w}");
    }
    if report.keypoint_count == 0 {
        bail!("{}: scene has no keypoints", args.scene.display());
    }
    Ok(())
}

/// Parses `argv` and runs the subcommand, returning the process exit code.
pub fn main_with_args<I, S>(argv: I) -> i32
where
    I: IntoIterator<Item = S>,
    S: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(argv) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { 2 } else { 0 };
        }
    };
    let level = match cli.verbose {
        0 => "warn",
        1 => "info",
        _ => "debug",
    };
    let _ = env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level)).try_init();
    let result = match &cli.command {
        Command::Run(a) => run(a),
        Command::Synth(a) => synth(a),
        Command::Bench(a) => bench(a),
        Command::Stats(a) => stats(a),
        Command::Validate(a) => validate(a),
    };
    match result {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e:#}");
            1
        }
    }
}
