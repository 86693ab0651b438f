use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Instant;

use clap::{Args, Parser, Subcommand, ValueEnum};

use bifocal_avg::error::Error;
use bifocal_avg::geom::TensorKind;
use bifocal_avg::io::{
    evaluate, read_json, write_json, AveragedJson, CamerasJson, EvalReport, MeasurementsJson, SceneJson,
};
use bifocal_avg::pipeline::{run_averaging, run_recovery, Algorithm, Averaged, CalibrationRegime, PipelineConfig, Stage};
use bifocal_avg::synth::{generate, measure, IntrinsicsMode, Layout, NoiseConfig};

#[derive(Parser)]
#[command(name = "bifocal-avg", version, about = "Bifocal tensor averaging for collinear camera networks")]
struct Cli {
    /// Emit diagnostics as JSON lines on stderr.
    #[arg(long, global = true)]
    json: bool,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a synthetic scene.
    Synth(SynthArgs),
    /// Measure pairwise tensors and tracks from a scene.
    Measure(MeasureArgs),
    /// Average measured tensors over a triplet cover.
    Average(AverageArgs),
    /// Recover cameras from averaged tensors.
    Recover(RecoverArgs),
    /// Compute error metrics of reconstructed cameras.
    Eval(EvalArgs),
    /// Run measurement (optional), averaging, recovery and evaluation.
    Pipeline(PipelineArgs),
}

#[derive(Clone, Copy, ValueEnum)]
enum LayoutArg {
    Collinear,
    General,
    Mixed,
}

#[derive(Clone, Copy, ValueEnum)]
enum AlgorithmArg {
    R4,
    Vc,
}

impl From<AlgorithmArg> for Algorithm {
    fn from(a: AlgorithmArg) -> Self {
        match a {
            AlgorithmArg::R4 => Algorithm::R4,
            AlgorithmArg::Vc => Algorithm::Vc,
        }
    }
}

#[derive(Clone, Copy, ValueEnum)]
enum RegimeArg {
    Calibrated,
    Uncalibrated,
}

impl RegimeArg {
    fn kind(self) -> TensorKind {
        match self {
            RegimeArg::Calibrated => TensorKind::Essential,
            RegimeArg::Uncalibrated => TensorKind::Fundamental,
        }
    }
}

#[derive(Args)]
struct SynthArgs {
    #[arg(long, value_enum, default_value = "collinear")]
    layout: LayoutArg,
    /// Share of cameras on the line for the mixed layout.
    #[arg(long, default_value_t = 0.5)]
    collinear_fraction: f64,
    #[arg(long, default_value_t = 20)]
    cameras: usize,
    #[arg(long, default_value_t = 50)]
    points: usize,
    #[arg(long, value_enum, default_value = "calibrated")]
    regime: RegimeArg,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args, Clone)]
struct NoiseArgs {
    /// Mean geodesic rotation error per edge, degrees.
    #[arg(long, default_value_t = 0.0)]
    noise_rot_deg: f64,
    /// Mean translation direction error per edge, degrees.
    #[arg(long, default_value_t = 0.0)]
    noise_trans_deg: f64,
    /// Image point noise standard deviation.
    #[arg(long, default_value_t = 0.0)]
    noise_px: f64,
}

impl NoiseArgs {
    fn config(&self) -> NoiseConfig {
        NoiseConfig {
            rotation_deg: self.noise_rot_deg,
            translation_dir_deg: self.noise_trans_deg,
            pixel: self.noise_px,
            matrix: 0.0,
        }
    }
}

#[derive(Args)]
struct MeasureArgs {
    #[arg(long)]
    scene: PathBuf,
    #[command(flatten)]
    noise: NoiseArgs,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args, Clone)]
struct SolverArgs {
    #[arg(long, value_enum, default_value = "r4")]
    algorithm: AlgorithmArg,
    /// Expected calibration; checked against the measurements.
    #[arg(long, value_enum)]
    regime: Option<RegimeArg>,
    /// Primal and dual residual tolerance.
    #[arg(long, default_value_t = 1e-9)]
    tol: f64,
    #[arg(long, default_value_t = 500)]
    max_iters: usize,
    #[arg(long, default_value_t = bifocal_avg::graph::DEFAULT_COLLINEARITY_THRESHOLD)]
    collinearity_threshold: f64,
    /// Worker cap for averaging; results do not depend on it.
    #[arg(long)]
    threads: Option<usize>,
}

impl SolverArgs {
    fn config(&self) -> PipelineConfig {
        let mut cfg = PipelineConfig {
            algorithm: self.algorithm.into(),
            collinearity_threshold: self.collinearity_threshold,
            ..PipelineConfig::default()
        };
        cfg.admm.primal_tol = self.tol;
        cfg.admm.dual_tol = self.tol;
        cfg.admm.max_iters = self.max_iters;
        cfg.admm.threads = self.threads;
        cfg
    }

    fn check_kind(&self, kind: TensorKind) -> Result<(), Failure> {
        match self.regime {
            Some(r) if r.kind() != kind => Err(Failure::plain(Error::InvalidArgument(format!(
                "--regime expects {:?} tensors but the measurements hold {kind:?}",
                r.kind()
            )))),
            _ => Ok(()),
        }
    }
}

#[derive(Args)]
struct AverageArgs {
    #[arg(long)]
    measurements: PathBuf,
    #[command(flatten)]
    solver: SolverArgs,
    /// Averaged output; the convergence log goes next to it with a `.log` extension.
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct RecoverArgs {
    #[arg(long)]
    averaged: PathBuf,
    /// Measurements providing the tracks.
    #[arg(long)]
    measurements: PathBuf,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct EvalArgs {
    #[arg(long)]
    cameras: PathBuf,
    /// Ground truth for position errors.
    #[arg(long)]
    scene: Option<PathBuf>,
    /// Tracks for the reprojection error.
    #[arg(long)]
    measurements: Option<PathBuf>,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct PipelineArgs {
    /// Ground-truth scene; measured with the noise flags when no measurements are given.
    #[arg(long)]
    scene: Option<PathBuf>,
    #[arg(long)]
    measurements: Option<PathBuf>,
    #[command(flatten)]
    noise: NoiseArgs,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[command(flatten)]
    solver: SolverArgs,
    /// Record wall time in the report (makes it run dependent).
    #[arg(long)]
    timing: bool,
    /// Output directory.
    #[arg(long)]
    out: PathBuf,
}

/// An error with the stage that raised it, if known.
struct Failure {
    stage: Option<Stage>,
    error: Error,
}

impl Failure {
    fn plain(error: Error) -> Self {
        Self { stage: None, error }
    }
}

impl From<Error> for Failure {
    fn from(error: Error) -> Self {
        Self::plain(error)
    }
}

impl From<bifocal_avg::pipeline::StageError> for Failure {
    fn from(e: bifocal_avg::pipeline::StageError) -> Self {
        Self {
            stage: Some(e.stage),
            error: e.source,
        }
    }
}

enum Outcome {
    Done,
    NotConverged { iterations: usize },
}

fn exit_code(e: &Error) -> u8 {
    match e {
        Error::NoConvergence { .. } => 3,
        Error::Io(_) => 1,
        _ => 2,
    }
}

fn info(json: bool, msg: &str, fields: serde_json::Value) {
    if json {
        let mut v = fields;
        v["message"] = serde_json::Value::from(msg);
        eprintln!("{v}");
    } else {
        eprintln!("{msg}");
    }
}

fn log_path(out: &Path) -> PathBuf {
    out.with_extension("log")
}

fn write_log(path: &Path, averaged: &Averaged) -> Result<(), Error> {
    let file = std::fs::File::create(path)?;
    if let Some(res) = &averaged.averaging {
        res.write_log(std::io::BufWriter::new(file))?;
    }
    Ok(())
}

fn outcome(averaged: &Averaged) -> Outcome {
    if averaged.converged {
        Outcome::Done
    } else {
        Outcome::NotConverged {
            iterations: averaged.iterations,
        }
    }
}

/// Later-stage failures after a non-converged average are reported as the
/// non-convergence that caused them.
fn unconverged_cause(averaged: &Averaged, e: bifocal_avg::pipeline::StageError) -> Failure {
    match averaged.averaging.as_ref().map(|r| r.require_converged()) {
        Some(Err(nc)) => Failure {
            stage: Some(Stage::Average),
            error: nc,
        },
        _ => e.into(),
    }
}

fn cmd_synth(a: &SynthArgs, json: bool) -> Result<Outcome, Failure> {
    let layout = match a.layout {
        LayoutArg::Collinear => Layout::Collinear,
        LayoutArg::General => Layout::General,
        LayoutArg::Mixed => Layout::Mixed {
            collinear_fraction: a.collinear_fraction,
        },
    };
    let mode = match a.regime {
        RegimeArg::Calibrated => IntrinsicsMode::Calibrated,
        RegimeArg::Uncalibrated => IntrinsicsMode::Varied,
    };
    let scene = generate(layout, a.cameras, a.points, a.seed, mode)?;
    write_json(&a.out, &SceneJson::from_scene(&scene))?;
    info(json, "scene written", serde_json::json!({"path": a.out, "cameras": a.cameras}));
    Ok(Outcome::Done)
}

fn cmd_measure(a: &MeasureArgs, json: bool) -> Result<Outcome, Failure> {
    let scene = read_json::<SceneJson>(&a.scene)?.to_scene()?;
    let (m, tracks) = measure(&scene, &a.noise.config(), a.seed)?;
    write_json(&a.out, &MeasurementsJson::new(&m, &tracks.tracks))?;
    info(json, "measurements written", serde_json::json!({"path": a.out, "edges": m.len()}));
    Ok(Outcome::Done)
}

fn cmd_average(a: &AverageArgs, json: bool) -> Result<Outcome, Failure> {
    let meas: MeasurementsJson = read_json(&a.measurements)?;
    a.solver.check_kind(meas.kind)?;
    let m = meas.bifocal()?;
    let tracks = meas.tracks()?;
    let averaged = run_averaging(&m, &tracks, &a.solver.config())?;
    write_json(&a.out, &AveragedJson::new(&averaged, m.kind))?;
    write_log(&log_path(&a.out), &averaged)?;
    info(
        json,
        "averaging finished",
        serde_json::json!({"converged": averaged.converged, "iterations": averaged.iterations}),
    );
    Ok(outcome(&averaged))
}

fn cmd_recover(a: &RecoverArgs, json: bool) -> Result<Outcome, Failure> {
    let av: AveragedJson = read_json(&a.averaged)?;
    let meas: MeasurementsJson = read_json(&a.measurements)?;
    let tracks = meas.tracks()?;
    let averaged = av.to_averaged()?;
    let out = run_recovery(&averaged, av.kind, &tracks, &PipelineConfig::default().recovery)?;
    write_json(&a.out, &CamerasJson::new(out.frame, &out.cameras))?;
    info(json, "cameras written", serde_json::json!({"path": a.out}));
    Ok(Outcome::Done)
}

fn cmd_eval(a: &EvalArgs, json: bool) -> Result<Outcome, Failure> {
    let cams: CamerasJson = read_json(&a.cameras)?;
    let scene = match &a.scene {
        Some(p) => Some(read_json::<SceneJson>(p)?.to_scene()?),
        None => None,
    };
    let (tracks, kind) = match &a.measurements {
        Some(p) => {
            let m: MeasurementsJson = read_json(p)?;
            (m.tracks()?, m.kind)
        }
        None => (
            Vec::new(),
            scene.as_ref().map_or(TensorKind::Fundamental, |s| s.kind()),
        ),
    };
    let report = evaluate(&cams.matrices(), cams.frame, kind, scene.as_ref(), &tracks)?;
    write_json(&a.out, &report)?;
    info(json, "report written", serde_json::to_value(&report).unwrap_or_default());
    Ok(Outcome::Done)
}

fn cmd_pipeline(a: &PipelineArgs, json: bool) -> Result<Outcome, Failure> {
    let scene = match &a.scene {
        Some(p) => Some(read_json::<SceneJson>(p)?.to_scene()?),
        None => None,
    };
    std::fs::create_dir_all(&a.out).map_err(Error::from)?;
    let meas = match (&a.measurements, &scene) {
        (Some(p), _) => read_json::<MeasurementsJson>(p)?,
        (None, Some(s)) => {
            let (m, tracks) = measure(s, &a.noise.config(), a.seed)?;
            let j = MeasurementsJson::new(&m, &tracks.tracks);
            write_json(&a.out.join("measurements.json"), &j)?;
            j
        }
        (None, None) => {
            return Err(Failure::plain(Error::InvalidArgument(
                "pipeline needs --scene or --measurements".into(),
            )))
        }
    };
    a.solver.check_kind(meas.kind)?;
    let m = meas.bifocal()?;
    let tracks = meas.tracks()?;
    let cfg = a.solver.config();
    let start = Instant::now();
    let averaged = run_averaging(&m, &tracks, &cfg)?;
    write_log(&a.out.join("averaging.log"), &averaged)?;
    let out = run_recovery(&averaged, m.kind, &tracks, &cfg.recovery).map_err(|e| unconverged_cause(&averaged, e))?;
    let elapsed = start.elapsed().as_secs_f64();
    write_json(&a.out.join("cameras_out.json"), &CamerasJson::new(out.frame, &out.cameras))?;
    let mut report: EvalReport = evaluate(&out.cameras, out.frame, m.kind, scene.as_ref(), &tracks)?;
    report.algorithm = Some(cfg.algorithm);
    report.regime = CalibrationRegime::of(m.kind);
    report.converged = Some(averaged.converged);
    report.iterations = Some(averaged.iterations);
    report.runtime_seconds = a.timing.then_some(elapsed);
    write_json(&a.out.join("report.json"), &report)?;
    info(json, "pipeline finished", serde_json::to_value(&report).unwrap_or_default());
    Ok(outcome(&averaged))
}

fn main() -> ExitCode {
    env_logger::init();
    let cli = Cli::parse();
    let json = cli.json;
    let result = match &cli.command {
        Command::Synth(a) => cmd_synth(a, json),
        Command::Measure(a) => cmd_measure(a, json),
        Command::Average(a) => cmd_average(a, json),
        Command::Recover(a) => cmd_recover(a, json),
        Command::Eval(a) => cmd_eval(a, json),
        Command::Pipeline(a) => cmd_pipeline(a, json),
    };
    match result {
        Ok(Outcome::Done) => ExitCode::SUCCESS,
        Ok(Outcome::NotConverged { iterations }) => {
            info(
                json,
                "averaging did not converge",
                serde_json::json!({"error": "no_convergence", "iterations": iterations}),
            );
            ExitCode::from(3)
        }
        Err(f) => {
            let code = exit_code(&f.error);
            let stage = f.stage.map(|s| format!("{s:?}").to_lowercase());
            if json {
                eprintln!(
                    "{}",
                    serde_json::json!({"error": f.error.to_string(), "stage": stage, "exit_code": code})
                );
            } else {
                match stage {
                    Some(s) => eprintln!("error in {s} stage: {}", f.error),
                    None => eprintln!("error: {}", f.error),
                }
            }
            ExitCode::from(code)
        }
    }
}
