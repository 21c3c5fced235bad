mod common;

use proptest::prelude::*;
use rand::Rng;

use rs_selfcal::bundle::{solve, CameraState, Problem, SolverOptions, Variant};
use rs_selfcal::geom::{Pose, Rotation, Similarity, Vec3};
use rs_selfcal::rs_models::{project_pinhole, RsParams};
use rs_selfcal::synth::{
    evaluate, generate_motions, generate_rs_motion, rotation_error, run_experiment, synthesize_observations,
    translation_error, ObservationModel, ScenePreset, TrialConfig,
};

const DRAWS: usize = 100_000;

#[test]
fn rotation_magnitude_is_half_normal() {
    let cfg = TrialConfig::default();
    let extent = 0.768;
    let mut rng = common::rng(1);
    let mean: f64 = (0..DRAWS)
        .map(|_| extent * generate_rs_motion(&mut rng, &cfg, 1.0, extent).unwrap().phi.norm())
        .sum::<f64>()
        / DRAWS as f64;
    let expected = 0.05 * (2.0 / std::f64::consts::PI).sqrt();
    assert!(
        (mean / expected - 1.0).abs() <= 0.01,
        "mean {mean}, expected {expected}"
    );
}

#[test]
fn rotation_axis_is_uniform_over_octants() {
    let cfg = TrialConfig::default();
    let mut rng = common::rng(2);
    let mut counts = [0usize; 8];
    for _ in 0..DRAWS {
        let phi = generate_rs_motion(&mut rng, &cfg, 1.0, 0.768).unwrap().phi;
        let idx = (phi.x > 0.0) as usize | ((phi.y > 0.0) as usize) << 1 | ((phi.z > 0.0) as usize) << 2;
        counts[idx] += 1;
    }
    let e = DRAWS as f64 / 8.0;
    let chi2: f64 = counts.iter().map(|&c| (c as f64 - e).powi(2) / e).sum();
    // 99th percentile of chi-square with 7 degrees of freedom.
    assert!(chi2 < 18.475, "chi2 {chi2}, counts {counts:?}");
}

#[test]
fn translation_rate_has_configured_spread() {
    let cfg = TrialConfig::default();
    let (step, extent) = (2.0, 0.768);
    let mut rng = common::rng(3);
    let mut sq = 0.0;
    for _ in 0..DRAWS {
        sq += generate_rs_motion(&mut rng, &cfg, step, extent)
            .unwrap()
            .v
            .norm_squared();
    }
    let std = (sq / (3 * DRAWS) as f64).sqrt();
    let expected = cfg.sigma_trans * step / extent;
    assert!((std / expected - 1.0).abs() <= 0.01, "std {std}, expected {expected}");
}

#[test]
fn pixel_noise_has_half_normal_mean() {
    let scene = common::scene(ScenePreset::Generic, 4, 10, 200);
    let motions = common::zero_motions(10);
    let obs = synthesize_observations(&mut common::rng(5), &scene, &motions, 0.5, ObservationModel::Full).unwrap();
    let mut sum = 0.0;
    for o in &obs {
        let clean = project_pinhole(&scene.trajectory[o.cam_id], &scene.intrinsics, &scene.points[o.pt_id]).unwrap();
        sum += (o.u - clean.x).abs() + (o.v - clean.y).abs();
    }
    let mean = sum / (2 * obs.len()) as f64;
    let expected = 0.5 * (2.0 / std::f64::consts::PI).sqrt();
    assert!(
        (mean / expected - 1.0).abs() <= 0.03,
        "mean {mean}, expected {expected}"
    );
}

#[test]
fn first_image_is_clean() {
    let scene = common::scene(ScenePreset::LowElevation, 6, 10, 200);
    let cfg = TrialConfig::default();
    let motions = generate_motions(&mut common::rng(7), &scene, &cfg).unwrap();
    assert_eq!(motions[0].phi, Vec3::zeros());
    assert_eq!(motions[0].v, Vec3::zeros());
    assert!(motions[1..].iter().all(|m| m.phi.norm() > 0.0));
    let obs = synthesize_observations(&mut common::rng(8), &scene, &motions, 0.0, ObservationModel::Full).unwrap();
    let mut cam0 = 0;
    for o in obs.iter().filter(|o| o.cam_id == 0) {
        let clean = project_pinhole(&scene.trajectory[0], &scene.intrinsics, &scene.points[o.pt_id]).unwrap();
        assert!((o.pixel() - clean).amax() <= 1e-9);
        cam0 += 1;
    }
    assert!(cam0 > 0);
}

#[test]
fn motions_are_fixed_while_noise_changes_per_trial() {
    let scene = common::scene(ScenePreset::Generic, 9, 5, 40);
    let cfg = TrialConfig {
        n_trials: 3,
        ..TrialConfig::default()
    };
    let a = run_experiment(&scene, &cfg, &[Variant::NoRs]).unwrap();
    let b = run_experiment(&scene, &TrialConfig { n_trials: 1, ..cfg }, &[Variant::NoRs]).unwrap();
    assert_eq!(a.motions, b.motions);
    assert_eq!(a.rows[0].final_cost, b.rows[0].final_cost);
    assert_ne!(a.rows[0].final_cost, a.rows[1].final_cost);
    assert_ne!(a.rows[1].final_cost, a.rows[2].final_cost);
}

fn y_extent(points: &[Vec3]) -> f64 {
    let (lo, hi) = points.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), x| {
        (lo.min(x.y), hi.max(x.y))
    });
    hi - lo
}

#[test]
fn unanchored_structure_is_stretched_vertically() {
    let scene = common::scene(ScenePreset::YShared, 10, 10, 200);
    let cfg = TrialConfig::default();
    let motions = generate_motions(&mut common::rng(11), &scene, &cfg).unwrap();
    let truth_extent = y_extent(&scene.points);
    let trials = 10;
    let mut worse = 0;
    for t in 0..trials {
        let mut rng = common::rng(100 + t);
        let obs = synthesize_observations(&mut rng, &scene, &motions, 0.5, ObservationModel::Full).unwrap();
        let cams = scene
            .trajectory
            .iter()
            .map(|p| CameraState::new(*p, RsParams::zero(), scene.intrinsics))
            .collect();
        let init = common::perturb(
            &Problem::new(cams, scene.points.clone(), obs),
            200 + t,
            0.01,
            0.05,
            0.05,
        );
        let pinhole = solve(&init, &SolverOptions::new(Variant::NoRs)).unwrap();
        let start = pinhole.problem(init.observations.clone());
        let ratio = |v: Variant| {
            let r = solve(&start, &SolverOptions::new(v)).unwrap();
            let est: Vec<Pose> = r.cameras.iter().map(|c| c.pose).collect();
            let (_, sim) = translation_error(&scene.trajectory, &est).unwrap();
            let aligned: Vec<Vec3> = r.points.iter().map(|x| sim.apply(x)).collect();
            (y_extent(&aligned) / truth_extent - 1.0).abs()
        };
        if ratio(Variant::TwoStep) > ratio(Variant::TwoStepAnchored) {
            worse += 1;
        }
    }
    assert!(worse * 10 >= trials * 8, "stretched in {worse}/{trials} trials");
}

fn random_similarity(rng: &mut impl Rng) -> Similarity {
    Similarity {
        rotation: common::random_rotation(rng),
        translation: common::gaussian3(rng, 10.0),
        scale: rng.gen_range(0.2..5.0),
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn metrics_vanish_for_similar_estimates(seed in 0u64..10_000) {
        let scene = common::scene(ScenePreset::Generic, seed % 7, 6, 30);
        let mut rng = common::rng(seed);
        let s = random_similarity(&mut rng);
        let poses: Vec<Pose> = scene.trajectory.iter().map(|p| s.apply_pose(p)).collect();
        let points: Vec<Vec3> = scene.points.iter().map(|x| s.apply(x)).collect();
        let m = evaluate(&scene.trajectory, &scene.points, &poses, &points).unwrap();
        prop_assert!(m.rot_err <= 1e-9 && m.trans_err <= 1e-9 && m.struct_err <= 1e-8);
    }

    #[test]
    fn metrics_are_invariant_to_similarity_of_estimate(seed in 0u64..10_000) {
        let scene = common::scene(ScenePreset::Generic, seed % 7, 6, 30);
        let mut rng = common::rng(seed);
        let est: Vec<Pose> = scene
            .trajectory
            .iter()
            .map(|p| Pose::new(Rotation::from_axis_angle(&common::gaussian3(&mut rng, 0.02)) * p.rotation, p.position + common::gaussian3(&mut rng, 0.1)))
            .collect();
        let pts: Vec<Vec3> = scene.points.iter().map(|x| x + common::gaussian3(&mut rng, 0.1)).collect();
        let s = random_similarity(&mut rng);
        let est2: Vec<Pose> = est.iter().map(|p| s.apply_pose(p)).collect();
        let pts2: Vec<Vec3> = pts.iter().map(|x| s.apply(x)).collect();
        let a = evaluate(&scene.trajectory, &scene.points, &est, &pts).unwrap();
        let b = evaluate(&scene.trajectory, &scene.points, &est2, &pts2).unwrap();
        prop_assert!((a.rot_err - b.rot_err).abs() <= 1e-9);
        prop_assert!((a.trans_err - b.trans_err).abs() <= 1e-9);
        prop_assert!((a.struct_err - b.struct_err).abs() <= 1e-8);
    }

    #[test]
    fn rotation_error_ignores_common_rotation(seed in 0u64..10_000) {
        let mut rng = common::rng(seed);
        let truth: Vec<Pose> = (0..5).map(|_| Pose::new(common::random_rotation(&mut rng), Vec3::zeros())).collect();
        let est: Vec<Pose> = truth
            .iter()
            .map(|p| Pose::new(Rotation::from_axis_angle(&common::gaussian3(&mut rng, 0.1)) * p.rotation, Vec3::zeros()))
            .collect();
        let q = common::random_rotation(&mut rng);
        let rotate = |v: &[Pose]| v.iter().map(|p| Pose::new(p.rotation * q.inverse(), q.apply(&p.position))).collect::<Vec<_>>();
        let a = rotation_error(&truth, &est).unwrap();
        let b = rotation_error(&rotate(&truth), &rotate(&est)).unwrap();
        prop_assert!((a - b).abs() <= 1e-10);
    }
}
