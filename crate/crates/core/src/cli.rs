//! Command-line front end.
//!
//! Exit codes: 0 success, 1 I/O or other failure, 2 invalid flags or input,
//! 3 insufficient coverage or infeasible problem, 4 numerical failure,
//! 10 critical motion detected by `cms-check`.

use std::ffi::OsString;
use std::fs;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::Serialize;

use crate::bundle::{solve, AnchorParam, CameraState, LmOptions, RobustLoss, SolverOptions, Variant};
use crate::error::{Error, Result};
use crate::geom::{Pose, Rotation, Vec3};
use crate::io::{load_scene_file, write_json, ReportFile, RunManifest, SceneFile};
use crate::rs_models::RsParams;
use crate::selfcalib::{cms_check_trajectory, NullityConfig};
use crate::synth::{
    generate_motions, run_experiment, synthesize_observations, InitMode, ObservationModel, Scene, ScenePreset,
    SceneSpec, TrialConfig,
};

pub const EXIT_OK: i32 = 0;
pub const EXIT_FAILURE: i32 = 1;
pub const EXIT_USAGE: i32 = 2;
pub const EXIT_INFEASIBLE: i32 = 3;
pub const EXIT_NUMERICAL: i32 = 4;
pub const EXIT_CMS: i32 = 10;

#[derive(Debug, Parser)]
#[command(
    name = "rs-selfcal",
    version,
    about = "Rolling-shutter bundle adjustment and critical-motion analysis"
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Generate a synthetic scene with RS-distorted observations.
    Synth(SynthArgs),
    /// Run bundle adjustment on a scene file with observations.
    Solve(SolveArgs),
    /// Run the multi-trial synthetic experiment.
    Experiment(ExperimentArgs),
    /// Test a camera trajectory for critical motion.
    CmsCheck(CmsCheckArgs),
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct SceneSource {
    /// Built-in scene.
    #[arg(long, conflicts_with = "scene_in", default_value = "low-elevation")]
    pub scene_preset: ScenePresetArg,
    /// Scene JSON to use instead of a preset.
    #[arg(long)]
    pub scene_in: Option<PathBuf>,
    #[arg(long, default_value_t = 10)]
    pub cameras: usize,
    #[arg(long, default_value_t = 200)]
    pub points: usize,
    /// Camera elevation in degrees (low-elevation preset).
    #[arg(long, default_value_t = 5.0)]
    pub elevation: f64,
    /// Seed for the procedural scene; defaults to --seed.
    #[arg(long)]
    pub scene_seed: Option<u64>,
}

#[derive(Debug, Clone, Copy, Serialize)]
#[serde(transparent)]
pub struct ScenePresetArg(pub ScenePreset);

impl std::str::FromStr for ScenePresetArg {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        s.parse().map(ScenePresetArg)
    }
}

impl SceneSource {
    fn load(&self, seed: u64) -> Result<Scene> {
        match &self.scene_in {
            Some(path) => load_scene_file(path)?.scene(),
            None => SceneSpec {
                preset: self.scene_preset.0,
                n_cameras: self.cameras,
                n_points: self.points,
                elevation: self.elevation.to_radians(),
                seed: self.scene_seed.unwrap_or(seed),
            }
            .build(),
        }
    }
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct MotionArgs {
    /// Std. dev. of the intra-frame rotation angle over the image (rad).
    #[arg(long, default_value_t = 0.05)]
    pub sigma_rot: f64,
    /// Std. dev. of the intra-frame translation relative to the mean camera step.
    #[arg(long, default_value_t = 0.05)]
    pub sigma_trans: f64,
    /// Std. dev. of the pixel noise.
    #[arg(long, default_value_t = 0.5)]
    pub noise: f64,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Leave the first image free of RS distortion.
    #[arg(long, default_value_t = true, action = clap::ArgAction::Set)]
    pub clean_first: bool,
    /// Camera model used to render observations.
    #[arg(long, value_parser = parse_model, default_value = "full")]
    #[serde(skip)]
    pub model: ObservationModel,
    #[arg(long, default_value_t = 0.01)]
    pub init_sigma_rot: f64,
    #[arg(long, default_value_t = 0.05)]
    pub init_sigma_pos: f64,
    #[arg(long, default_value_t = 0.05)]
    pub init_sigma_point: f64,
}

fn parse_model(s: &str) -> std::result::Result<ObservationModel, String> {
    match s {
        "full" => Ok(ObservationModel::Full),
        "two-step" => Ok(ObservationModel::TwoStep),
        _ => Err(format!("unknown model '{s}' (expected full or two-step)")),
    }
}

impl MotionArgs {
    fn trial_config(&self) -> TrialConfig {
        TrialConfig {
            sigma_rot: self.sigma_rot,
            sigma_trans: self.sigma_trans,
            pixel_noise_sigma: self.noise,
            seed: self.seed,
            first_image_clean: self.clean_first,
            observation_model: self.model,
            init_sigma_rot: self.init_sigma_rot,
            init_sigma_pos: self.init_sigma_pos,
            init_sigma_point: self.init_sigma_point,
            ..TrialConfig::default()
        }
    }
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct SynthArgs {
    #[command(flatten)]
    pub scene: SceneSource,
    #[command(flatten)]
    pub motion: MotionArgs,
    #[arg(long, default_value = "synth-out")]
    pub out_dir: PathBuf,
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct SolverArgs {
    /// no-rs, rs, rs-star or rs-exact.
    #[arg(long, default_value = "rs")]
    pub variant: Variant,
    /// Camera whose RS parameter is pinned (rs-star).
    #[arg(long, default_value_t = 0)]
    pub anchor_cam: usize,
    /// phi1 or phi2.
    #[arg(long, default_value = "phi1")]
    pub anchor_param: AnchorParam,
    #[arg(long, default_value_t = 200)]
    pub max_iters: usize,
    /// Huber threshold in pixels; quadratic loss when absent.
    #[arg(long)]
    pub huber: Option<f64>,
}

impl SolverArgs {
    fn options(&self) -> Result<SolverOptions> {
        let mut o = SolverOptions::new(self.variant);
        o.anchor_cam = self.anchor_cam;
        o.anchor_param = self.anchor_param;
        o.lm = LmOptions {
            max_iters: self.max_iters,
            ..LmOptions::default()
        };
        if let Some(d) = self.huber {
            if !(d > 0.0 && d.is_finite()) {
                return Err(Error::InvalidInput(format!(
                    "Huber threshold must be positive, got {d}"
                )));
            }
            o.robust_loss = RobustLoss::Huber(d);
        }
        Ok(o)
    }
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct SolveArgs {
    /// Scene JSON with observations; its cameras and points are the initial values.
    #[arg(long)]
    pub scene: PathBuf,
    #[command(flatten)]
    pub solver: SolverArgs,
    #[arg(long, default_value = "solve-out")]
    pub out_dir: PathBuf,
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct ExperimentArgs {
    #[command(flatten)]
    pub scene: SceneSource,
    #[command(flatten)]
    pub motion: MotionArgs,
    #[arg(long, default_value_t = 100)]
    pub trials: usize,
    /// Comma-separated variants.
    #[arg(long, value_delimiter = ',', default_value = "no-rs,rs,rs-star,rs-exact")]
    pub variants: Vec<Variant>,
    /// Start of the RS variants: no-rs-solution or perturbed-truth.
    #[arg(long, default_value = "no-rs-solution")]
    #[serde(skip)]
    pub init: InitMode,
    #[arg(long, default_value_t = 0)]
    pub anchor_cam: usize,
    #[arg(long, default_value = "phi1")]
    pub anchor_param: AnchorParam,
    /// Worker threads (0 = all cores). Output does not depend on it.
    #[arg(long, env = "RS_SELFCAL_THREADS", default_value_t = 0)]
    #[serde(skip)]
    pub threads: usize,
    #[arg(long, default_value = "experiment-out")]
    pub out_dir: PathBuf,
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct CmsCheckArgs {
    /// Scene JSON (poses, optional RS parameters).
    #[arg(long, conflicts_with = "preset")]
    pub scene: Option<PathBuf>,
    /// Check a built-in trajectory instead.
    #[arg(long)]
    pub preset: Option<ScenePresetArg>,
    #[arg(long, default_value_t = 10)]
    pub cameras: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Relative singular-value threshold.
    #[arg(long, default_value_t = 1e-7)]
    pub threshold: f64,
    /// Also write the report here.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

/// Maps an error onto the exit-code contract.
pub fn exit_code(err: &Error) -> i32 {
    match err {
        Error::InvalidInput(_) | Error::Json(_) => EXIT_USAGE,
        Error::InsufficientCoverage { .. } | Error::Infeasible { .. } | Error::InsufficientObservations(_) => {
            EXIT_INFEASIBLE
        }
        Error::NumericalFailure(_) => EXIT_NUMERICAL,
        _ => EXIT_FAILURE,
    }
}

/// Parses `args` and runs the command. Returns the process exit code.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { EXIT_USAGE } else { EXIT_OK };
        }
    };
    let result = match &cli.command {
        Command::Synth(a) => cmd_synth(a),
        Command::Solve(a) => cmd_solve(a),
        Command::Experiment(a) => cmd_experiment(a),
        Command::CmsCheck(a) => cmd_cms_check(a),
    };
    match result {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            exit_code(&e)
        }
    }
}

fn prepare_dir(dir: &Path) -> Result<()> {
    fs::create_dir_all(dir)?;
    Ok(())
}

/// Ground truth with perturbed poses and points, RS parameters zeroed.
fn perturbed_init(rng: &mut ChaCha8Rng, scene: &Scene, cfg: &TrialConfig) -> Result<(Vec<CameraState>, Vec<Vec3>)> {
    let dist = |s: f64| Normal::new(0.0, s).map_err(|e| Error::InvalidInput(e.to_string()));
    let (nr, np, nx) = (
        dist(cfg.init_sigma_rot)?,
        dist(cfg.init_sigma_pos)?,
        dist(cfg.init_sigma_point)?,
    );
    let mut v3 = |d: &Normal<f64>| Vec3::new(d.sample(rng), d.sample(rng), d.sample(rng));
    let cams = scene
        .trajectory
        .iter()
        .map(|p| {
            let pose = Pose::new(Rotation::from_axis_angle(&v3(&nr)) * p.rotation, p.position + v3(&np));
            CameraState::new(pose, RsParams::zero(), scene.intrinsics)
        })
        .collect();
    let points = scene.points.iter().map(|x| x + v3(&nx)).collect();
    Ok((cams, points))
}

/// Writes `truth.json` (ground truth with RS motion), `scene.json`
/// (observations with perturbed initial values) and `manifest.json`.
pub fn cmd_synth(a: &SynthArgs) -> Result<i32> {
    let cfg = a.motion.trial_config();
    cfg.validate()?;
    let scene = a.scene.load(cfg.seed)?;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let motions = generate_motions(&mut rng, &scene, &cfg)?;
    let obs = synthesize_observations(&mut rng, &scene, &motions, cfg.pixel_noise_sigma, cfg.observation_model)?;
    let (cams, points) = perturbed_init(&mut rng, &scene, &cfg)?;

    prepare_dir(&a.out_dir)?;
    write_json(
        &a.out_dir.join("truth.json"),
        &SceneFile::from_scene(&scene, Some(&motions), None),
    )?;
    let mut init = SceneFile::from_cameras(&cams, &points, Some(&obs), scene.width, scene.height);
    for c in &mut init.cameras {
        c.rs = None;
    }
    write_json(&a.out_dir.join("scene.json"), &init)?;
    write_json(
        &a.out_dir.join("manifest.json"),
        &RunManifest::new("synth", Some(cfg.seed), &(a, &cfg))?,
    )?;
    println!(
        "wrote {} observations of {} points in {} cameras to {}",
        obs.len(),
        scene.points.len(),
        scene.trajectory.len(),
        a.out_dir.display()
    );
    Ok(EXIT_OK)
}

/// Writes `report.json`, `estimate.json` and `manifest.json`.
pub fn cmd_solve(a: &SolveArgs) -> Result<i32> {
    let file = load_scene_file(&a.scene)?;
    let opts = a.solver.options()?;
    let mut problem = file.problem()?;
    if opts.variant.estimates_rs() {
        // RS parameters always start from zero.
        for c in &mut problem.cameras {
            c.rs = RsParams::zero();
        }
    }
    let rep = solve(&problem, &opts)?;
    prepare_dir(&a.out_dir)?;
    write_json(&a.out_dir.join("report.json"), &ReportFile::from(&rep))?;
    let est = SceneFile::from_cameras(
        &rep.cameras,
        &rep.points,
        Some(&problem.observations),
        file.intrinsics.width,
        file.intrinsics.height,
    );
    write_json(&a.out_dir.join("estimate.json"), &est)?;
    write_json(
        &a.out_dir.join("manifest.json"),
        &RunManifest::new("solve", None, &(a, &opts))?,
    )?;
    println!(
        "{}: cost {:.6e} -> {:.6e} in {} iterations ({:?})",
        rep.variant, rep.initial_cost, rep.final_cost, rep.iterations, rep.termination
    );
    Ok(EXIT_OK)
}

/// Writes `results.csv`, `hist/<metric>_<variant>.dat` and `manifest.json`.
pub fn cmd_experiment(a: &ExperimentArgs) -> Result<i32> {
    if a.variants.is_empty() {
        return Err(Error::InvalidInput("no variants given".into()));
    }
    let mut cfg = a.motion.trial_config();
    cfg.n_trials = a.trials;
    cfg.init = a.init;
    cfg.anchor_cam = a.anchor_cam;
    cfg.anchor_param = a.anchor_param;
    cfg.threads = a.threads;
    cfg.validate()?;
    let scene = a.scene.load(cfg.seed)?;
    let res = run_experiment(&scene, &cfg, &a.variants)?;

    prepare_dir(&a.out_dir)?;
    fs::write(a.out_dir.join("results.csv"), res.to_csv())?;
    let hist_dir = a.out_dir.join("hist");
    prepare_dir(&hist_dir)?;
    for h in res.histograms() {
        fs::write(hist_dir.join(format!("{}_{}.dat", h.metric, h.variant)), h.to_dat())?;
    }
    // Thread count is left out of the manifest: it does not affect results.
    let mut manifest_cfg = cfg.clone();
    manifest_cfg.threads = 0;
    write_json(
        &a.out_dir.join("manifest.json"),
        &RunManifest::new("experiment", Some(cfg.seed), &(a, &manifest_cfg))?,
    )?;

    println!(
        "{:<9} {:>12} {:>12} {:>12}",
        "variant", "rot_err", "trans_err", "struct_err"
    );
    for &v in &a.variants {
        println!(
            "{:<9} {:>12.4e} {:>12.4e} {:>12.4e}",
            v,
            res.median(v, "rot_err"),
            res.median(v, "trans_err"),
            res.median(v, "struct_err")
        );
    }
    Ok(EXIT_OK)
}

/// Prints the nullity report; exit code 10 when the motion is critical.
pub fn cmd_cms_check(a: &CmsCheckArgs) -> Result<i32> {
    let (poses, rs) = match (&a.scene, a.preset) {
        (Some(path), _) => {
            let f = load_scene_file(path)?;
            (f.poses()?, f.rs_params())
        }
        (None, Some(p)) => {
            let mut spec = SceneSpec::new(p.0, a.seed);
            spec.n_cameras = a.cameras;
            let scene = spec.build()?;
            let n = scene.trajectory.len();
            (scene.trajectory, vec![RsParams::zero(); n])
        }
        (None, None) => return Err(Error::InvalidInput("either --scene or --preset is required".into())),
    };
    let cfg = NullityConfig {
        threshold: a.threshold,
        ..NullityConfig::default()
    };
    let report = cms_check_trajectory(&poses, &rs, &cfg)?;
    let text = serde_json::to_string_pretty(&report)?;
    println!("{text}");
    if let Some(out) = &a.out {
        write_json(out, &report)?;
    }
    Ok(if report.is_cms { EXIT_CMS } else { EXIT_OK })
}
