#![allow(dead_code)]

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use rs_selfcal::bundle::{CameraState, Problem, Variant};
use rs_selfcal::geom::{Pose, Rotation, Vec3};
use rs_selfcal::rs_models::RsMotion;
use rs_selfcal::synth::{synthesize_observations, ObservationModel, Scene, ScenePreset, SceneSpec};

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn unit_vector(rng: &mut impl Rng) -> Vec3 {
    loop {
        let v = Vec3::new(
            StandardNormal.sample(rng),
            StandardNormal.sample(rng),
            StandardNormal.sample(rng),
        );
        let n = v.norm();
        if n > 1e-6 {
            return v / n;
        }
    }
}

pub fn random_rotation(rng: &mut impl Rng) -> Rotation {
    let angle = rng.gen_range(0.0..std::f64::consts::PI);
    Rotation::from_axis_angle(&(unit_vector(rng) * angle))
}

pub fn gaussian3(rng: &mut impl Rng, sigma: f64) -> Vec3 {
    Vec3::new(
        sigma * rng.sample::<f64, _>(StandardNormal),
        sigma * rng.sample::<f64, _>(StandardNormal),
        sigma * rng.sample::<f64, _>(StandardNormal),
    )
}

pub fn scene(preset: ScenePreset, seed: u64, cameras: usize, points: usize) -> Scene {
    let mut spec = SceneSpec::new(preset, seed);
    spec.n_cameras = cameras;
    spec.n_points = points;
    spec.build().unwrap()
}

/// Problem initialized at the ground truth, RS parameters included.
pub fn truth_problem(scene: &Scene, motions: &[RsMotion], noise: f64, model: ObservationModel, seed: u64) -> Problem {
    let obs = synthesize_observations(&mut rng(seed), scene, motions, noise, model).unwrap();
    let cams = scene
        .trajectory
        .iter()
        .zip(motions)
        .map(|(p, m)| CameraState::new(*p, m.params(), scene.intrinsics))
        .collect();
    Problem::new(cams, scene.points.clone(), obs)
}

/// Moves every pose and point by a random rigid-free perturbation and
/// resets the RS parameters to zero.
pub fn perturb(problem: &Problem, seed: u64, rot: f64, pos: f64, pt: f64) -> Problem {
    let mut r = rng(seed);
    let mut out = problem.clone();
    for c in &mut out.cameras {
        let dr = gaussian3(&mut r, rot);
        let dp = gaussian3(&mut r, pos);
        c.pose = Pose::new(Rotation::from_axis_angle(&dr) * c.pose.rotation, c.pose.position + dp);
        c.rs = Default::default();
    }
    for x in &mut out.points {
        *x += gaussian3(&mut r, pt);
    }
    out
}

pub fn zero_motions(n: usize) -> Vec<RsMotion> {
    vec![RsMotion::zero(); n]
}

/// Small RS motions with `v = 0`; camera 0 stays clean.
pub fn rotational_motions(rng: &mut impl Rng, n: usize, magnitude: f64, zero_phi3: bool) -> Vec<RsMotion> {
    (0..n)
        .map(|i| {
            if i == 0 {
                return RsMotion::zero();
            }
            let mut phi = unit_vector(rng) * magnitude;
            if zero_phi3 {
                phi.z = 0.0;
            }
            RsMotion::new(phi, Vec3::zeros())
        })
        .collect()
}

/// Worst block-relative discrepancy between the implemented Jacobian and
/// central differences for one observation. Blocks: rotation, position, rs,
/// point. `None` when the configuration cannot be projected.
pub fn fd_block_errors(problem: &Problem, variant: Variant) -> Option<[f64; 4]> {
    use rs_selfcal::bundle::{jacobian, residual, retract_camera};
    let obs = problem.observations[0];
    let jac = jacobian(problem, &obs, variant).ok()?;
    let ncam = jac.camera.ncols();
    let cam0 = problem.cameras[obs.cam_id];
    let x0 = problem.points[obs.pt_id];

    let mut fd_cam = nalgebra::DMatrix::zeros(2, ncam);
    for k in 0..ncam {
        let scale = match k {
            0..=2 => 1.0,
            3..=5 => cam0.pose.position[k - 3].abs().max(1.0),
            _ => 1.0,
        };
        let h = 1e-6 * scale;
        let eval = |s: f64| {
            let mut d = [0.0; 9];
            d[k] = s * h;
            let mut p = problem.clone();
            p.cameras[obs.cam_id] = retract_camera(&cam0, &d);
            residual(&p, &obs, variant)
        };
        let col = (eval(1.0).ok()? - eval(-1.0).ok()?) / (2.0 * h);
        fd_cam.set_column(k, &col);
    }
    let mut fd_pt = nalgebra::Matrix2x3::zeros();
    for k in 0..3 {
        let h = 1e-6 * x0[k].abs().max(1.0);
        let eval = |s: f64| {
            let mut p = problem.clone();
            p.points[obs.pt_id][k] += s * h;
            residual(&p, &obs, variant)
        };
        let col = (eval(1.0).ok()? - eval(-1.0).ok()?) / (2.0 * h);
        fd_pt.set_column(k, &col);
    }

    let rel = |a: nalgebra::DMatrixView<f64>, b: nalgebra::DMatrixView<f64>| {
        let n = b.norm();
        if n == 0.0 {
            a.norm()
        } else {
            (a - b).norm() / n
        }
    };
    let rs = if ncam == 9 {
        rel(jac.camera.columns(6, 3), fd_cam.columns(6, 3))
    } else {
        0.0
    };
    let pt_a = nalgebra::DMatrix::from_column_slice(2, 3, jac.point.as_slice());
    let pt_f = nalgebra::DMatrix::from_column_slice(2, 3, fd_pt.as_slice());
    Some([
        rel(jac.camera.columns(0, 3), fd_cam.columns(0, 3)),
        rel(jac.camera.columns(3, 3), fd_cam.columns(3, 3)),
        rs,
        rel(pt_a.as_view(), pt_f.as_view()),
    ])
}

/// Random single-observation problem: a camera with random pose and RS
/// parameters and a point inside its field of view.
pub fn random_fd_config(rng: &mut impl Rng) -> Problem {
    let rotation = random_rotation(rng);
    let position = gaussian3(rng, 5.0);
    let pose = Pose::new(rotation, position);
    let rs = rs_selfcal::rs_models::RsParams::new(
        rng.gen_range(-0.05..0.05),
        rng.gen_range(-0.05..0.05),
        rng.gen_range(-0.05..0.05),
    );
    let k = rs_selfcal::synth::default_intrinsics();
    let z = rng.gen_range(2.0..30.0);
    let xc = Vec3::new(rng.gen_range(-0.5..0.5) * z, rng.gen_range(-0.38..0.38) * z, z);
    let x = pose.camera_to_world(&xc);
    let cam = CameraState::new(pose, rs, k);
    let u = rng.gen_range(0.0..1024.0);
    let v = rng.gen_range(0.0..768.0);
    let mut obs = rs_selfcal::bundle::Observation::new(0, 0, u, v);
    obs.weight = rng.gen_range(0.5..2.0);
    Problem::new(vec![cam], vec![x], vec![obs])
}
