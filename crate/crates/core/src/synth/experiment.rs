use std::fmt::Write as _;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::generate::{generate_motions, synthesize_observations};
use super::metrics::{evaluate, Metrics};
use super::scene::Scene;
use super::TrialConfig;
use crate::bundle::{solve, CameraState, Problem, SolveReport, SolverOptions, Variant};
use crate::error::{Error, Result};
use crate::geom::{Pose, Rotation, Vec3};
use crate::rs_models::{RsMotion, RsParams};

/// Where the RS variants start from.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum InitMode {
    /// The pinhole bundle-adjustment solution of the same trial.
    #[default]
    NoRsSolution,
    /// Ground truth perturbed by the configured init noise.
    PerturbedTruth,
}

impl std::str::FromStr for InitMode {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "no-rs-solution" => Ok(InitMode::NoRsSolution),
            "perturbed-truth" => Ok(InitMode::PerturbedTruth),
            _ => Err(Error::InvalidInput(format!(
                "unknown init mode '{s}' (expected no-rs-solution or perturbed-truth)"
            ))),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrialRow {
    pub variant: Variant,
    pub trial: usize,
    pub metrics: Metrics,
    pub final_cost: f64,
    pub iterations: usize,
    pub converged: bool,
}

pub const METRIC_NAMES: [&str; 3] = ["rot_err", "trans_err", "struct_err"];

impl TrialRow {
    fn failed(variant: Variant, trial: usize) -> Self {
        TrialRow {
            variant,
            trial,
            metrics: Metrics::nan(),
            final_cost: f64::NAN,
            iterations: 0,
            converged: false,
        }
    }

    pub fn metric(&self, name: &str) -> f64 {
        match name {
            "rot_err" => self.metrics.rot_err,
            "trans_err" => self.metrics.trans_err,
            "struct_err" => self.metrics.struct_err,
            "struct_err_mean" => self.metrics.struct_err_mean,
            _ => f64::NAN,
        }
    }
}

/// Cumulative histogram over `[0, upper]` with equal-width bins.
#[derive(Debug, Clone, PartialEq)]
pub struct Histogram {
    pub variant: Variant,
    pub metric: &'static str,
    /// Right edge of each bin.
    pub edges: Vec<f64>,
    /// Number of trials with error at most the edge.
    pub cumulative: Vec<usize>,
}

impl Histogram {
    /// Two whitespace-separated columns, one bin per line.
    pub fn to_dat(&self) -> String {
        let mut s = format!("# {} {}\n", self.variant, self.metric);
        for (e, c) in self.edges.iter().zip(&self.cumulative) {
            let _ = writeln!(s, "{e} {c}");
        }
        s
    }
}

pub const HISTOGRAM_BINS: usize = 100;

#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentResult {
    pub variants: Vec<Variant>,
    pub motions: Vec<RsMotion>,
    pub rows: Vec<TrialRow>,
}

impl ExperimentResult {
    pub fn to_csv(&self) -> String {
        let mut s = String::from(
            "variant,trial,rot_err,trans_err,struct_err,final_cost,iterations,converged,struct_err_mean\n",
        );
        for r in &self.rows {
            let m = &r.metrics;
            let _ = writeln!(
                s,
                "{},{},{},{},{},{},{},{},{}",
                r.variant,
                r.trial,
                m.rot_err,
                m.trans_err,
                m.struct_err,
                r.final_cost,
                r.iterations,
                r.converged,
                m.struct_err_mean
            );
        }
        s
    }

    pub fn values(&self, variant: Variant, metric: &str) -> Vec<f64> {
        self.rows
            .iter()
            .filter(|r| r.variant == variant)
            .map(|r| r.metric(metric))
            .collect()
    }

    /// Median with failed trials counted as infinitely bad.
    pub fn median(&self, variant: Variant, metric: &str) -> f64 {
        let mut v: Vec<f64> = self
            .values(variant, metric)
            .into_iter()
            .map(|x| if x.is_nan() { f64::INFINITY } else { x })
            .collect();
        median(&mut v)
    }

    /// One histogram per variant and metric. The range is shared across
    /// variants: `[0, 99th percentile of all finite values]`.
    pub fn histograms(&self) -> Vec<Histogram> {
        let mut out = Vec::new();
        for metric in METRIC_NAMES {
            let mut all: Vec<f64> = self
                .rows
                .iter()
                .map(|r| r.metric(metric))
                .filter(|x| x.is_finite())
                .collect();
            all.sort_by(f64::total_cmp);
            let upper = if all.is_empty() {
                1.0
            } else {
                let idx = ((all.len() - 1) as f64 * 0.99).round() as usize;
                if all[idx] > 0.0 {
                    all[idx]
                } else {
                    1.0
                }
            };
            let edges: Vec<f64> = (1..=HISTOGRAM_BINS)
                .map(|b| upper * b as f64 / HISTOGRAM_BINS as f64)
                .collect();
            for &variant in &self.variants {
                let vals: Vec<f64> = self
                    .values(variant, metric)
                    .into_iter()
                    .filter(|x| x.is_finite())
                    .collect();
                let cumulative = edges
                    .iter()
                    .map(|&e| vals.iter().filter(|&&x| x <= e).count())
                    .collect();
                out.push(Histogram {
                    variant,
                    metric,
                    edges: edges.clone(),
                    cumulative,
                });
            }
        }
        out
    }
}

pub fn median(v: &mut [f64]) -> f64 {
    if v.is_empty() {
        return f64::NAN;
    }
    v.sort_by(f64::total_cmp);
    let n = v.len();
    if n % 2 == 1 {
        v[n / 2]
    } else {
        0.5 * (v[n / 2 - 1] + v[n / 2])
    }
}

fn trial_rng(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

/// Draws the RS motions once and runs every trial.
pub fn run_experiment(scene: &Scene, cfg: &TrialConfig, variants: &[Variant]) -> Result<ExperimentResult> {
    let mut rng = trial_rng(cfg.seed, 0);
    let motions = generate_motions(&mut rng, scene, cfg)?;
    run_experiment_with_motions(scene, &motions, cfg, variants)
}

/// Runs every trial with the given fixed RS motions. Trials use independent
/// random streams, so the output does not depend on the thread count.
pub fn run_experiment_with_motions(
    scene: &Scene,
    motions: &[RsMotion],
    cfg: &TrialConfig,
    variants: &[Variant],
) -> Result<ExperimentResult> {
    cfg.validate()?;
    scene.validate()?;
    if motions.len() != scene.trajectory.len() {
        return Err(Error::InvalidInput(format!(
            "{} motions for {} cameras",
            motions.len(),
            scene.trajectory.len()
        )));
    }
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(cfg.threads)
        .build()
        .map_err(|e| Error::InvalidInput(format!("cannot build thread pool: {e}")))?;
    let per_trial: Vec<Vec<TrialRow>> = pool.install(|| {
        (0..cfg.n_trials)
            .into_par_iter()
            .map(|t| run_trial(scene, motions, cfg, variants, t))
            .collect()
    });
    let mut rows = Vec::with_capacity(cfg.n_trials * variants.len());
    for v in variants {
        for trial in &per_trial {
            rows.extend(trial.iter().filter(|r| r.variant == *v).cloned());
        }
    }
    Ok(ExperimentResult {
        variants: variants.to_vec(),
        motions: motions.to_vec(),
        rows,
    })
}

fn perturbed_truth(rng: &mut ChaCha8Rng, scene: &Scene, cfg: &TrialConfig) -> Result<(Vec<CameraState>, Vec<Vec3>)> {
    let nr = Normal::new(0.0, cfg.init_sigma_rot).map_err(|e| Error::InvalidInput(e.to_string()))?;
    let np = Normal::new(0.0, cfg.init_sigma_pos).map_err(|e| Error::InvalidInput(e.to_string()))?;
    let nx = Normal::new(0.0, cfg.init_sigma_point).map_err(|e| Error::InvalidInput(e.to_string()))?;
    let mut v3 = |d: &Normal<f64>| Vec3::new(d.sample(rng), d.sample(rng), d.sample(rng));
    let cams = scene
        .trajectory
        .iter()
        .map(|p| {
            let dr = v3(&nr);
            let dp = v3(&np);
            let pose = Pose::new(Rotation::from_axis_angle(&dr) * p.rotation, p.position + dp);
            CameraState::new(pose, RsParams::zero(), scene.intrinsics)
        })
        .collect();
    let points = scene.points.iter().map(|x| x + v3(&nx)).collect();
    Ok((cams, points))
}

fn row_from_report(scene: &Scene, variant: Variant, trial: usize, rep: &SolveReport) -> TrialRow {
    let poses: Vec<Pose> = rep.cameras.iter().map(|c| c.pose).collect();
    let metrics = evaluate(&scene.trajectory, &scene.points, &poses, &rep.points).unwrap_or_else(|_| Metrics::nan());
    TrialRow {
        variant,
        trial,
        metrics,
        final_cost: rep.final_cost,
        iterations: rep.iterations,
        converged: rep.converged(),
    }
}

fn run_trial(
    scene: &Scene,
    motions: &[RsMotion],
    cfg: &TrialConfig,
    variants: &[Variant],
    trial: usize,
) -> Vec<TrialRow> {
    let mut rng = trial_rng(cfg.seed, trial as u64 + 1);
    let setup = synthesize_observations(&mut rng, scene, motions, cfg.pixel_noise_sigma, cfg.observation_model)
        .and_then(|obs| Ok((obs, perturbed_truth(&mut rng, scene, cfg)?)));
    let Ok((obs, (cams, points))) = setup else {
        return variants.iter().map(|&v| TrialRow::failed(v, trial)).collect();
    };
    let base = Problem::new(cams, points, obs);
    let options = |v: Variant| {
        let mut o = SolverOptions::new(v);
        o.anchor_cam = cfg.anchor_cam;
        o.anchor_param = cfg.anchor_param;
        o.lm = cfg.lm;
        o
    };

    let need_pinhole = variants.contains(&Variant::NoRs) || cfg.init == InitMode::NoRsSolution;
    let pinhole = if need_pinhole {
        solve(&base, &options(Variant::NoRs)).ok()
    } else {
        None
    };
    let rs_start = match (&pinhole, cfg.init) {
        (Some(rep), InitMode::NoRsSolution) => {
            let cams = rep
                .cameras
                .iter()
                .map(|c| CameraState {
                    rs: RsParams::zero(),
                    ..*c
                })
                .collect();
            Problem::new(cams, rep.points.clone(), base.observations.clone())
        }
        _ => base.clone(),
    };

    variants
        .iter()
        .map(|&v| {
            let rep = match v {
                Variant::NoRs => pinhole.clone(),
                _ => solve(&rs_start, &options(v)).ok(),
            };
            match rep {
                Some(rep) => row_from_report(scene, v, trial, &rep),
                None => TrialRow::failed(v, trial),
            }
        })
        .collect()
}
