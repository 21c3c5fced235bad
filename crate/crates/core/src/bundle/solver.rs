use nalgebra::{DMatrix, DVector, Matrix3, SMatrix, SVector, Vector2};
use serde::{Deserialize, Serialize};

use super::model::{
    project, project_with_jacobian, retract_camera, CameraJacobian, CameraState, PointJacobian, Variant, CAM_DOF,
};
use crate::error::{Error, Result};
use crate::geom::{Pixel, Vec3};
use crate::selfcalib::feasibility_count;

/// Residual magnitude (pixels, per coordinate) substituted for an observation
/// whose prediction is undefined.
pub const INVALID_RESIDUAL: f64 = 1e3;
/// Minimum observations per camera.
pub const MIN_OBS_PER_CAMERA: usize = 6;
/// Minimum distinct cameras per point.
pub const MIN_CAMERAS_PER_POINT: usize = 2;

type Mat9 = SMatrix<f64, CAM_DOF, CAM_DOF>;
type Mat9x3 = SMatrix<f64, CAM_DOF, 3>;
type Vec9 = SVector<f64, CAM_DOF>;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Observation {
    pub cam_id: usize,
    pub pt_id: usize,
    pub u: f64,
    pub v: f64,
    #[serde(default = "unit_weight")]
    pub weight: f64,
}

fn unit_weight() -> f64 {
    1.0
}

impl Observation {
    pub fn new(cam_id: usize, pt_id: usize, u: f64, v: f64) -> Self {
        Observation {
            cam_id,
            pt_id,
            u,
            v,
            weight: 1.0,
        }
    }

    pub fn pixel(&self) -> Pixel {
        Pixel::new(self.u, self.v)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Problem {
    pub cameras: Vec<CameraState>,
    pub points: Vec<Vec3>,
    pub observations: Vec<Observation>,
}

impl Problem {
    pub fn new(cameras: Vec<CameraState>, points: Vec<Vec3>, observations: Vec<Observation>) -> Self {
        Problem {
            cameras,
            points,
            observations,
        }
    }

    /// Checks indices, weights and coverage.
    pub fn validate(&self) -> Result<()> {
        let m = self.cameras.len();
        let n = self.points.len();
        if m == 0 || n == 0 {
            return Err(Error::InsufficientObservations(
                "problem has no cameras or no points".into(),
            ));
        }
        let mut per_camera = vec![0usize; m];
        let mut cams_of_point: Vec<Vec<usize>> = vec![Vec::new(); n];
        for (k, o) in self.observations.iter().enumerate() {
            if o.cam_id >= m || o.pt_id >= n {
                return Err(Error::InvalidInput(format!(
                    "observation {k} references camera {} / point {} out of range",
                    o.cam_id, o.pt_id
                )));
            }
            if !(o.weight.is_finite() && o.weight > 0.0) || !o.u.is_finite() || !o.v.is_finite() {
                return Err(Error::InvalidInput(format!(
                    "observation {k} has a non-finite value or non-positive weight"
                )));
            }
            per_camera[o.cam_id] += 1;
            let cams = &mut cams_of_point[o.pt_id];
            if !cams.contains(&o.cam_id) {
                cams.push(o.cam_id);
            }
        }
        if let Some((i, &c)) = per_camera.iter().enumerate().find(|(_, &c)| c < MIN_OBS_PER_CAMERA) {
            return Err(Error::InsufficientObservations(format!(
                "camera {i} has {c} observations, need at least {MIN_OBS_PER_CAMERA}"
            )));
        }
        if let Some((j, c)) = cams_of_point
            .iter()
            .enumerate()
            .find(|(_, c)| c.len() < MIN_CAMERAS_PER_POINT)
        {
            return Err(Error::InsufficientObservations(format!(
                "point {j} is seen by {} camera(s), need at least {MIN_CAMERAS_PER_POINT}",
                c.len()
            )));
        }
        Ok(())
    }

    /// Total cost `Σ ρ(‖r‖²)` under `variant` and `loss`.
    pub fn cost(&self, variant: Variant, loss: RobustLoss) -> f64 {
        self.observations
            .iter()
            .map(|o| loss.rho(robust_residual(self, o, variant).norm_squared()))
            .sum()
    }
}

/// Which RS parameter of the anchor camera is pinned to zero.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum AnchorParam {
    #[default]
    Phi1,
    Phi2,
}

impl AnchorParam {
    fn index(self) -> usize {
        match self {
            AnchorParam::Phi1 => 0,
            AnchorParam::Phi2 => 1,
        }
    }
}

impl std::str::FromStr for AnchorParam {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "phi1" => Ok(AnchorParam::Phi1),
            "phi2" => Ok(AnchorParam::Phi2),
            _ => Err(Error::InvalidInput(format!(
                "unknown anchor parameter '{s}' (expected phi1 or phi2)"
            ))),
        }
    }
}

/// Similarity gauge: the first camera pose is held, and one position
/// coordinate of the second camera fixes the scale.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub enum Gauge {
    #[default]
    FixFirstPoseAndScale,
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub enum RobustLoss {
    #[default]
    None,
    Huber(f64),
}

impl RobustLoss {
    /// `ρ(s)` for a squared residual norm `s`.
    pub fn rho(self, s: f64) -> f64 {
        match self {
            RobustLoss::None => s,
            RobustLoss::Huber(d) => {
                if s <= d * d {
                    s
                } else {
                    2.0 * d * s.sqrt() - d * d
                }
            }
        }
    }

    /// Factor applied to residual and Jacobian rows so that the Gauss-Newton
    /// gradient matches `ρ'`.
    fn row_scale(self, s: f64) -> f64 {
        match self {
            RobustLoss::None => 1.0,
            RobustLoss::Huber(d) => {
                if s <= d * d {
                    1.0
                } else {
                    (d / s.sqrt()).sqrt()
                }
            }
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LmOptions {
    pub max_iters: usize,
    /// Relative cost decrease below which an accepted step terminates.
    pub f_tol: f64,
    /// Infinity norm of the gradient below which the solver stops.
    pub g_tol: f64,
    /// Step length relative to the parameter norm below which the solver stops.
    pub x_tol: f64,
    pub initial_damping: f64,
    pub max_damping: f64,
}

impl Default for LmOptions {
    fn default() -> Self {
        LmOptions {
            max_iters: 200,
            f_tol: 1e-12,
            g_tol: 1e-10,
            x_tol: 1e-14,
            initial_damping: 1e-4,
            max_damping: 1e16,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SolverOptions {
    pub variant: Variant,
    pub anchor_cam: usize,
    pub anchor_param: AnchorParam,
    pub gauge: Gauge,
    pub lm: LmOptions,
    pub robust_loss: RobustLoss,
    /// Hold every RS parameter at its initial value.
    pub fix_rs: bool,
}

impl SolverOptions {
    pub fn new(variant: Variant) -> Self {
        SolverOptions {
            variant,
            anchor_cam: 0,
            anchor_param: AnchorParam::Phi1,
            gauge: Gauge::FixFirstPoseAndScale,
            lm: LmOptions::default(),
            robust_loss: RobustLoss::None,
            fix_rs: false,
        }
    }
}

/// Free/frozen flags for every camera parameter. Points are always free.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ParameterMask {
    pub cameras: Vec<[bool; CAM_DOF]>,
    pub n_points: usize,
}

impl ParameterMask {
    pub fn n_active(&self) -> usize {
        self.cameras.iter().flatten().filter(|&&b| b).count() + 3 * self.n_points
    }

    pub fn is_free(&self, cam: usize, k: usize) -> bool {
        self.cameras[cam][k]
    }
}

/// Builds the parameter mask for `opts`. For the anchored variant the anchor
/// parameter is also reset to zero in `problem`.
pub fn apply_gauge_fix(problem: &mut Problem, opts: &SolverOptions) -> Result<ParameterMask> {
    let m = problem.cameras.len();
    if m < 2 {
        return Err(Error::InvalidInput(format!(
            "bundle adjustment needs at least 2 cameras, got {m}"
        )));
    }
    let rs_free = opts.variant.estimates_rs() && !opts.fix_rs;
    let mut cameras = vec![[true; CAM_DOF]; m];
    for c in cameras.iter_mut() {
        c[6..].fill(rs_free);
    }
    match opts.gauge {
        Gauge::FixFirstPoseAndScale => {
            cameras[0][..6].fill(false);
            let d = problem.cameras[1].pose.position - problem.cameras[0].pose.position;
            if d.norm() == 0.0 {
                return Err(Error::DegenerateConfiguration(
                    "first two camera centres coincide".into(),
                ));
            }
            cameras[1][3 + d.iamax()] = false;
        }
    }
    if opts.variant == Variant::TwoStepAnchored {
        if opts.anchor_cam >= m {
            return Err(Error::InvalidInput(format!(
                "anchor camera {} out of range (m = {m})",
                opts.anchor_cam
            )));
        }
        let idx = opts.anchor_param.index();
        let mut a = problem.cameras[opts.anchor_cam].rs.as_array();
        a[idx] = 0.0;
        problem.cameras[opts.anchor_cam].rs = crate::rs_models::RsParams::from_array(a);
        cameras[opts.anchor_cam][6 + idx] = false;
    }
    Ok(ParameterMask {
        cameras,
        n_points: problem.points.len(),
    })
}

/// Weighted reprojection residual `(predicted − observed)·weight`.
pub fn residual(problem: &Problem, obs: &Observation, variant: Variant) -> Result<Vector2<f64>> {
    let pred = project(variant, &problem.cameras[obs.cam_id], &problem.points[obs.pt_id])?;
    Ok((pred - obs.pixel()) * obs.weight)
}

fn robust_residual(problem: &Problem, obs: &Observation, variant: Variant) -> Vector2<f64> {
    residual(problem, obs, variant).unwrap_or_else(|_| Vector2::repeat(INVALID_RESIDUAL * obs.weight))
}

/// Residual Jacobian of one observation restricted to the columns the
/// variant estimates (6 for `NoRs`, 9 otherwise), plus the point block.
#[derive(Debug, Clone, PartialEq)]
pub struct ObservationJacobian {
    pub camera: DMatrix<f64>,
    pub point: PointJacobian,
}

pub fn jacobian(problem: &Problem, obs: &Observation, variant: Variant) -> Result<ObservationJacobian> {
    let (_, jc, jp) = project_with_jacobian(variant, &problem.cameras[obs.cam_id], &problem.points[obs.pt_id])?;
    let ncols = if variant.estimates_rs() { CAM_DOF } else { 6 };
    Ok(ObservationJacobian {
        camera: DMatrix::from_fn(2, ncols, |i, j| jc[(i, j)] * obs.weight),
        point: jp * obs.weight,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Termination {
    GradientTolerance,
    CostTolerance,
    StepTolerance,
    DampingLimit,
    MaxIterations,
}

impl Termination {
    pub fn converged(self) -> bool {
        !matches!(self, Termination::MaxIterations)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct IterationRecord {
    pub iteration: usize,
    pub cost: f64,
    pub damping: f64,
    pub accepted: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SolveReport {
    pub variant: Variant,
    pub initial_cost: f64,
    pub final_cost: f64,
    pub iterations: usize,
    pub termination: Termination,
    pub cameras: Vec<CameraState>,
    pub points: Vec<Vec3>,
    /// Observations whose prediction is undefined at the solution.
    pub invalid_observations: usize,
    pub history: Vec<IterationRecord>,
}

impl SolveReport {
    pub fn converged(&self) -> bool {
        self.termination.converged()
    }

    /// The adjusted problem, with the original observations.
    pub fn problem(&self, observations: Vec<Observation>) -> Problem {
        Problem::new(self.cameras.clone(), self.points.clone(), observations)
    }
}

/// Linearization at the current estimate, with robust weights and the
/// parameter mask already applied.
struct Linearization {
    cost: f64,
    u: Vec<Mat9>,
    gc: Vec<Vec9>,
    v: Vec<Matrix3<f64>>,
    gp: Vec<Vec3>,
    w: Vec<Mat9x3>,
}

impl Linearization {
    fn gradient_inf_norm(&self) -> f64 {
        let a = self.gc.iter().map(|g| g.amax()).fold(0.0, f64::max);
        let b = self.gp.iter().map(|g| g.amax()).fold(0.0, f64::max);
        a.max(b)
    }
}

fn linearize(problem: &Problem, variant: Variant, loss: RobustLoss, mask: &ParameterMask) -> Linearization {
    let m = problem.cameras.len();
    let n = problem.points.len();
    let mut lin = Linearization {
        cost: 0.0,
        u: vec![Mat9::zeros(); m],
        gc: vec![Vec9::zeros(); m],
        v: vec![Matrix3::zeros(); n],
        gp: vec![Vec3::zeros(); n],
        w: Vec::with_capacity(problem.observations.len()),
    };
    for o in &problem.observations {
        let cam = &problem.cameras[o.cam_id];
        let (r, mut jc, mut jp) = match project_with_jacobian(variant, cam, &problem.points[o.pt_id]) {
            Ok((pred, jc, jp)) => ((pred - o.pixel()) * o.weight, jc * o.weight, jp * o.weight),
            Err(_) => (
                Vector2::repeat(INVALID_RESIDUAL * o.weight),
                CameraJacobian::zeros(),
                PointJacobian::zeros(),
            ),
        };
        let s = r.norm_squared();
        lin.cost += loss.rho(s);
        let scale = loss.row_scale(s);
        let r = r * scale;
        jc *= scale;
        jp *= scale;
        for k in 0..CAM_DOF {
            if !mask.is_free(o.cam_id, k) {
                jc.column_mut(k).fill(0.0);
            }
        }
        let jct = jc.transpose();
        lin.u[o.cam_id] += jct * jc;
        lin.gc[o.cam_id] += jct * r;
        lin.v[o.pt_id] += jp.transpose() * jp;
        lin.gp[o.pt_id] += jp.transpose() * r;
        lin.w.push(jct * jp);
    }
    lin
}

/// Solves the damped normal equations by eliminating the points.
/// Returns `(Δcameras, Δpoints)` or `None` if the reduced system is not
/// positive definite.
fn solve_damped(
    problem: &Problem,
    lin: &Linearization,
    mask: &ParameterMask,
    obs_of_point: &[Vec<usize>],
    lambda: f64,
) -> Option<(Vec<Vec9>, Vec<Vec3>)> {
    const DIAG_FLOOR: f64 = 1e-12;
    let m = problem.cameras.len();
    let dim = CAM_DOF * m;
    let mut s = DMatrix::<f64>::zeros(dim, dim);
    let mut rhs = DVector::<f64>::zeros(dim);
    for i in 0..m {
        let mut ui = lin.u[i];
        for k in 0..CAM_DOF {
            if mask.is_free(i, k) {
                ui[(k, k)] += lambda * ui[(k, k)].max(DIAG_FLOOR);
            } else {
                ui[(k, k)] = 1.0;
            }
        }
        s.fixed_view_mut::<CAM_DOF, CAM_DOF>(CAM_DOF * i, CAM_DOF * i)
            .copy_from(&ui);
        rhs.fixed_rows_mut::<CAM_DOF>(CAM_DOF * i).copy_from(&(-lin.gc[i]));
    }

    let mut v_inv = Vec::with_capacity(problem.points.len());
    for (j, obs) in obs_of_point.iter().enumerate() {
        let mut vj = lin.v[j];
        for k in 0..3 {
            vj[(k, k)] += lambda * vj[(k, k)].max(DIAG_FLOOR);
        }
        let vi = vj.cholesky()?.inverse();
        let y: Vec<(usize, Mat9x3)> = obs
            .iter()
            .map(|&k| (problem.observations[k].cam_id, lin.w[k] * vi))
            .collect();
        for (ca, ya) in &y {
            let mut rb = rhs.fixed_rows_mut::<CAM_DOF>(CAM_DOF * ca);
            rb += ya * lin.gp[j];
            for (&kb, (cb, _)) in obs.iter().zip(&y) {
                let block = ya * lin.w[kb].transpose();
                let mut sb = s.fixed_view_mut::<CAM_DOF, CAM_DOF>(CAM_DOF * ca, CAM_DOF * cb);
                sb -= block;
            }
        }
        v_inv.push(vi);
    }

    let chol = s.cholesky()?;
    let dc = chol.solve(&rhs);
    let dcam: Vec<Vec9> = (0..m)
        .map(|i| {
            let mut d: Vec9 = dc.fixed_rows::<CAM_DOF>(CAM_DOF * i).into_owned();
            for k in 0..CAM_DOF {
                if !mask.is_free(i, k) {
                    d[k] = 0.0;
                }
            }
            d
        })
        .collect();
    let dpts: Vec<Vec3> = obs_of_point
        .iter()
        .enumerate()
        .map(|(j, obs)| {
            let mut acc = -lin.gp[j];
            for &k in obs {
                acc -= lin.w[k].transpose() * dcam[problem.observations[k].cam_id];
            }
            v_inv[j] * acc
        })
        .collect();
    if dcam.iter().any(|d| !d.iter().all(|x| x.is_finite())) || dpts.iter().any(|d| !d.iter().all(|x| x.is_finite())) {
        return None;
    }
    Some((dcam, dpts))
}

fn parameter_norm(problem: &Problem) -> f64 {
    let c: f64 = problem
        .cameras
        .iter()
        .map(|c| c.pose.position.norm_squared() + c.rs.as_vec3().norm_squared())
        .sum();
    let p: f64 = problem.points.iter().map(|x| x.norm_squared()).sum();
    (c + p).sqrt()
}

/// Levenberg-Marquardt bundle adjustment.
pub fn solve(problem: &Problem, opts: &SolverOptions) -> Result<SolveReport> {
    problem.validate()?;
    let m = problem.cameras.len();
    if opts.variant.estimates_rs() && !opts.fix_rs && !feasibility_count(m, 3, 0) {
        return Err(Error::Infeasible { cameras: m });
    }
    let mut current = problem.clone();
    let mask = apply_gauge_fix(&mut current, opts)?;
    let variant = opts.variant;
    let loss = opts.robust_loss;
    let lm = opts.lm;

    let mut obs_of_point = vec![Vec::new(); current.points.len()];
    for (k, o) in current.observations.iter().enumerate() {
        obs_of_point[o.pt_id].push(k);
    }

    let mut lin = linearize(&current, variant, loss, &mask);
    let initial_cost = lin.cost;
    if !initial_cost.is_finite() {
        return Err(Error::NumericalFailure("initial cost is not finite".into()));
    }
    let mut lambda = lm.initial_damping;
    let mut history = Vec::new();
    let mut iterations = 0;
    let mut termination = Termination::MaxIterations;

    while iterations < lm.max_iters {
        if lin.gradient_inf_norm() <= lm.g_tol {
            termination = Termination::GradientTolerance;
            break;
        }
        iterations += 1;
        let step = solve_damped(&current, &lin, &mask, &obs_of_point, lambda);
        let Some((dcam, dpts)) = step else {
            lambda *= 10.0;
            history.push(IterationRecord {
                iteration: iterations,
                cost: lin.cost,
                damping: lambda,
                accepted: false,
            });
            if lambda > lm.max_damping {
                return Err(Error::NumericalFailure(
                    "normal equations stayed singular up to the damping limit".into(),
                ));
            }
            continue;
        };

        let step_norm = (dcam.iter().map(|d| d.norm_squared()).sum::<f64>()
            + dpts.iter().map(|d| d.norm_squared()).sum::<f64>())
        .sqrt();
        if step_norm <= lm.x_tol * (parameter_norm(&current) + lm.x_tol) {
            history.push(IterationRecord {
                iteration: iterations,
                cost: lin.cost,
                damping: lambda,
                accepted: false,
            });
            termination = Termination::StepTolerance;
            break;
        }

        let mut candidate = current.clone();
        for (cam, d) in candidate.cameras.iter_mut().zip(&dcam) {
            *cam = retract_camera(cam, d.as_slice());
        }
        for (x, d) in candidate.points.iter_mut().zip(&dpts) {
            *x += d;
        }
        let new_cost = candidate.cost(variant, loss);
        let accepted = new_cost.is_finite() && new_cost < lin.cost;
        history.push(IterationRecord {
            iteration: iterations,
            cost: if accepted { new_cost } else { lin.cost },
            damping: lambda,
            accepted,
        });

        if accepted {
            let old_cost = lin.cost;
            current = candidate;
            lin = linearize(&current, variant, loss, &mask);
            lambda = (lambda / 3.0).max(1e-15);
            if (old_cost - new_cost) <= lm.f_tol * old_cost {
                termination = Termination::CostTolerance;
                break;
            }
        } else {
            lambda *= 10.0;
            if lambda > lm.max_damping {
                termination = Termination::DampingLimit;
                break;
            }
        }
    }

    let invalid_observations = current
        .observations
        .iter()
        .filter(|o| residual(&current, o, variant).is_err())
        .count();
    Ok(SolveReport {
        variant,
        initial_cost,
        final_cost: lin.cost,
        iterations,
        termination,
        cameras: current.cameras,
        points: current.points,
        invalid_observations,
        history,
    })
}
