//! Command-line front end. [`run`] parses arguments, executes one subcommand
//! and returns the process exit code: 0 on success, 1 for IO and parse
//! failures, 2 for validation and domain errors.

use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};

use crate::error::{Error, Result};
use crate::ik::{scale_model, solve_trajectory, IkSettings};
use crate::io;
use crate::metrics::{evaluate, LandmarkInput, RootAlignment};
use crate::model::SkeletalModel;
use crate::sequence::{interpolate_gaps, smooth_angles, smooth_markers, SmoothMethod, DEFAULT_MAX_GAP};
use crate::synth::{
    generate_trajectory, perturb_markers, render_markers_parallel, sensitivity_csv, sensitivity_study, NoiseModel,
    TrajectorySpec,
};

#[derive(Debug, Parser)]
#[command(name = "skelkin", version, about = "Skeletal forward/inverse kinematics and joint-angle metrics")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Render marker positions from an angle file.
    Fk(FkArgs),
    /// Estimate body scales from a calibration-pose marker file.
    Scale(ScaleArgs),
    /// Solve joint angles from a marker file.
    Ik(IkArgs),
    /// Compare estimated angles (and optionally markers) with ground truth.
    Eval(EvalArgs),
    /// Fill gaps and smooth a marker or angle file.
    Smooth(SmoothArgs),
    /// Generate a random sinusoidal angle trajectory and its markers.
    Synth(SynthArgs),
    /// Marker-noise sensitivity study.
    Sensitivity(SensitivityArgs),
    /// Batched forward-kinematics throughput.
    Bench(BenchArgs),
}

#[derive(Debug, Args)]
pub struct FkArgs {
    #[arg(long)]
    pub model: PathBuf,
    #[arg(long)]
    pub angles: PathBuf,
    /// Scales file; defaults to the scale block of the angle file.
    #[arg(long)]
    pub scales: Option<PathBuf>,
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long, default_value_t = 1)]
    pub threads: usize,
}

#[derive(Debug, Args)]
pub struct ScaleArgs {
    #[arg(long)]
    pub model: PathBuf,
    #[arg(long)]
    pub markers: PathBuf,
    /// Frame of the marker file holding the calibration pose.
    #[arg(long, default_value_t = 0)]
    pub frame: usize,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct IkArgs {
    #[arg(long)]
    pub model: PathBuf,
    /// Scales file; defaults to the model's default scales.
    #[arg(long)]
    pub scales: Option<PathBuf>,
    #[arg(long)]
    pub markers: PathBuf,
    /// Settings file with an `[ik]` section.
    #[arg(long)]
    pub settings: Option<PathBuf>,
    /// Fill marker gaps up to this many frames before solving.
    #[arg(long)]
    pub max_gap: Option<usize>,
    #[arg(long)]
    pub out: PathBuf,
    /// Per-frame residual report (CSV).
    #[arg(long)]
    pub report: Option<PathBuf>,
    /// Worker threads; only used when warm start is off.
    #[arg(long, default_value_t = 1)]
    pub threads: usize,
}

#[derive(Debug, Args)]
pub struct EvalArgs {
    #[arg(long)]
    pub gt: PathBuf,
    #[arg(long)]
    pub est: PathBuf,
    #[arg(long, requires = "est_markers")]
    pub gt_markers: Option<PathBuf>,
    #[arg(long, requires = "gt_markers")]
    pub est_markers: Option<PathBuf>,
    /// Enables body-scale errors and restricts landmarks to bony markers.
    #[arg(long)]
    pub model: Option<PathBuf>,
    /// Marker used for root alignment; the landmark centroid when absent.
    #[arg(long)]
    pub root_marker: Option<String>,
    #[arg(long)]
    pub out: PathBuf,
    /// Per-DOF CSV with median and IQR rows.
    #[arg(long)]
    pub per_dof: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct SmoothArgs {
    #[arg(long)]
    pub input: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
    /// Moving-average window (odd).
    #[arg(long, conflicts_with = "alpha")]
    pub window: Option<usize>,
    /// Exponential smoothing factor in (0, 1].
    #[arg(long)]
    pub alpha: Option<f64>,
    /// Fill interior marker gaps up to this many frames first.
    #[arg(long, default_value_t = DEFAULT_MAX_GAP)]
    pub max_gap: usize,
}

#[derive(Debug, Args)]
pub struct SynthArgs {
    #[arg(long)]
    pub model: PathBuf,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long, default_value_t = 2.0)]
    pub duration: f64,
    #[arg(long, default_value_t = 30.0)]
    pub fps: f64,
    /// Fraction of each DOF's half range used as the amplitude ceiling.
    #[arg(long, default_value_t = 0.6)]
    pub amplitude: f64,
    /// Gaussian marker noise (mm per axis) added to the marker output.
    #[arg(long, default_value_t = 0.0)]
    pub noise_mm: f64,
    #[arg(long)]
    pub scales: Option<PathBuf>,
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long)]
    pub markers_out: Option<PathBuf>,
    #[arg(long, default_value_t = 1)]
    pub threads: usize,
}

#[derive(Debug, Args)]
pub struct SensitivityArgs {
    #[arg(long)]
    pub model: PathBuf,
    #[arg(long)]
    pub scales: Option<PathBuf>,
    /// Ground-truth angles; a random trajectory from --seed when absent.
    #[arg(long)]
    pub angles: Option<PathBuf>,
    #[arg(long, value_delimiter = ',', default_value = "0,10,20,30")]
    pub noise_mm: Vec<f64>,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Noise seeds used per level: seed, seed+1, ...
    #[arg(long, default_value_t = 3)]
    pub repeats: u64,
    #[arg(long)]
    pub settings: Option<PathBuf>,
    #[arg(long, default_value_t = 1)]
    pub threads: usize,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct BenchArgs {
    #[arg(long)]
    pub model: PathBuf,
    #[arg(long, value_delimiter = ',', default_value = "1,16,64,256")]
    pub batch_sizes: Vec<usize>,
    #[arg(long, default_value_t = 4096)]
    pub frames: usize,
    #[arg(long, default_value_t = 5)]
    pub trials: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long, default_value_t = 1)]
    pub threads: usize,
    /// Timing table (CSV); printed to stdout when absent.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

/// Parses `args` (program name first), runs the command and returns the exit code.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { 2 } else { 0 };
        }
    };
    match execute(cli.command) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}

pub fn execute(command: Command) -> Result<()> {
    match command {
        Command::Fk(a) => cmd_fk(&a),
        Command::Scale(a) => cmd_scale(&a),
        Command::Ik(a) => cmd_ik(&a),
        Command::Eval(a) => cmd_eval(&a),
        Command::Smooth(a) => cmd_smooth(&a),
        Command::Synth(a) => cmd_synth(&a),
        Command::Sensitivity(a) => cmd_sensitivity(&a),
        Command::Bench(a) => cmd_bench(&a),
    }
}

fn load_scales(model: &SkeletalModel, path: &Option<PathBuf>) -> Result<Vec<nalgebra::Vector3<f64>>> {
    match path {
        Some(p) => io::parse_scales(&io::read_to_string(p)?, model),
        None => Ok(model.default_scales()),
    }
}

fn load_settings(path: &Option<PathBuf>) -> Result<IkSettings> {
    match path {
        Some(p) => IkSettings::parse(&io::read_to_string(p)?),
        None => Ok(IkSettings::default()),
    }
}

pub fn cmd_fk(a: &FkArgs) -> Result<()> {
    let model = SkeletalModel::load(&a.model)?;
    let angles = io::load_angles(&a.angles)?;
    let scales = match &a.scales {
        Some(_) => load_scales(&model, &a.scales)?,
        None => angles.model_scales(&model)?,
    };
    let markers = render_markers_parallel(&model, &scales, &angles, a.threads)?;
    io::write_string(&a.out, &io::write_markers(&markers))
}

pub fn cmd_scale(a: &ScaleArgs) -> Result<()> {
    let model = SkeletalModel::load(&a.model)?;
    let markers = io::load_markers(&a.markers)?;
    if a.frame >= markers.len() {
        return Err(Error::InvalidParameter(format!(
            "frame {} requested, marker file has {} frames",
            a.frame,
            markers.len()
        )));
    }
    let scales = scale_model(&model, &markers.frame(a.frame))?;
    io::write_string(&a.out, &io::write_scales(&model, &scales))
}

pub fn cmd_ik(a: &IkArgs) -> Result<()> {
    let model = SkeletalModel::load(&a.model)?;
    let scales = load_scales(&model, &a.scales)?;
    let settings = load_settings(&a.settings)?;
    let mut markers = io::load_markers(&a.markers)?;
    if let Some(gap) = a.max_gap {
        markers = interpolate_gaps(&markers, gap);
    }
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(a.threads.max(1))
        .build()
        .map_err(|e| Error::InvalidParameter(format!("thread pool: {e}")))?;
    let solution = pool.install(|| solve_trajectory(&model, &scales, &markers, &settings))?;
    io::write_string(&a.out, &io::write_angles(&solution.angles))?;
    if let Some(report) = &a.report {
        io::write_string(report, &io::write_ik_report(&model, &solution))?;
    }
    Ok(())
}

pub fn cmd_eval(a: &EvalArgs) -> Result<()> {
    let gt = io::load_angles(&a.gt)?;
    let est = io::load_angles(&a.est)?;
    let model = a.model.as_ref().map(SkeletalModel::load).transpose()?;
    let marker_pair = match (&a.gt_markers, &a.est_markers) {
        (Some(g), Some(e)) => Some((io::load_markers(g)?, io::load_markers(e)?)),
        _ => None,
    };
    let landmarks = marker_pair.as_ref().map(|(g, e)| {
        let landmarks = match &model {
            Some(m) => m
                .markers()
                .iter()
                .filter(|mk| mk.bony && Some(&mk.name) != a.root_marker.as_ref())
                .map(|mk| mk.name.clone())
                .collect(),
            None => g
                .marker_names
                .iter()
                .filter(|n| Some(*n) != a.root_marker.as_ref())
                .cloned()
                .collect(),
        };
        LandmarkInput {
            est: e,
            gt: g,
            landmarks,
            root: a.root_marker.clone().map_or(RootAlignment::Centroid, RootAlignment::Marker),
        }
    });
    let report = evaluate(&est, &gt, landmarks.as_ref(), model.as_ref())?;
    io::write_string(&a.out, &report.to_text())?;
    if let Some(p) = &a.per_dof {
        io::write_string(p, &report.per_dof_csv())?;
    }
    Ok(())
}

pub fn cmd_smooth(a: &SmoothArgs) -> Result<()> {
    let method = match (a.window, a.alpha) {
        (_, Some(alpha)) => SmoothMethod::Exponential { alpha },
        (Some(window), None) => SmoothMethod::MovingAverage { window },
        (None, None) => SmoothMethod::MovingAverage { window: 5 },
    };
    let text = io::read_to_string(&a.input)?;
    let out = if text.lines().any(|l| l.trim() == "#! kind = angles") {
        io::write_angles(&smooth_angles(&io::parse_angles(&text)?, method)?)
    } else {
        let markers = interpolate_gaps(&io::parse_markers(&text)?, a.max_gap);
        io::write_markers(&smooth_markers(&markers, method)?)
    };
    io::write_string(&a.out, &out)
}

pub fn cmd_synth(a: &SynthArgs) -> Result<()> {
    let model = SkeletalModel::load(&a.model)?;
    let scales = load_scales(&model, &a.scales)?;
    if !(0.0..=1.0).contains(&a.amplitude) {
        return Err(Error::InvalidParameter(format!("amplitude fraction must be in [0, 1], got {}", a.amplitude)));
    }
    let spec = TrajectorySpec::random(&model, a.duration, a.fps, a.amplitude, a.seed);
    let mut angles = generate_trajectory(&model, &spec)?;
    angles.scales = model
        .bodies()
        .iter()
        .zip(&scales)
        .map(|(b, s)| (b.name.clone(), *s))
        .collect();
    io::write_string(&a.out, &io::write_angles(&angles))?;
    if let Some(path) = &a.markers_out {
        let clean = render_markers_parallel(&model, &scales, &angles, a.threads)?;
        let noisy = perturb_markers(&clean, &NoiseModel::Gaussian { sigma_mm: a.noise_mm }, a.seed)?;
        io::write_string(path, &io::write_markers(&noisy))?;
    }
    Ok(())
}

pub fn cmd_sensitivity(a: &SensitivityArgs) -> Result<()> {
    let model = SkeletalModel::load(&a.model)?;
    let scales = load_scales(&model, &a.scales)?;
    let settings = load_settings(&a.settings)?;
    let angles = match &a.angles {
        Some(p) => io::load_angles(p)?,
        None => generate_trajectory(&model, &TrajectorySpec::random(&model, 2.0, 30.0, 0.6, a.seed))?,
    };
    let seeds: Vec<u64> = (0..a.repeats).map(|k| a.seed.wrapping_add(k)).collect();
    let rows = sensitivity_study(&model, &scales, &angles, &a.noise_mm, &seeds, &settings, a.threads)?;
    io::write_string(&a.out, &sensitivity_csv(&rows))
}

pub fn cmd_bench(a: &BenchArgs) -> Result<()> {
    let model = SkeletalModel::load(&a.model)?;
    let rows = crate::bench::run(&model, &a.batch_sizes, a.frames, a.trials, a.threads, a.seed)?;
    let table = crate::bench::table(&rows);
    match &a.out {
        Some(p) => io::write_string(p, &table),
        None => {
            print!("{table}");
            Ok(())
        }
    }
}
