mod common;

use proptest::prelude::*;
use rand::Rng;

use rs_selfcal::geom::{Pose, Rotation, Vec3};
use rs_selfcal::rs_models::{ImaginaryIntrinsics, RsParams};
use rs_selfcal::selfcalib::{
    cms_check_trajectory, cms_nullity, diac_from_imaginary_K, max_residual, projective_cameras_from_metric,
    prop3_gauge_transform, CalibUnknowns, NullityConfig, NullityReport, SharedAxisCamera,
};

fn random_rs(rng: &mut impl Rng) -> RsParams {
    RsParams::new(
        rng.gen_range(-0.05..0.05),
        rng.gen_range(-0.05..0.05),
        rng.gen_range(-0.05..0.05),
    )
}

fn random_poses(rng: &mut impl Rng, m: usize) -> Vec<Pose> {
    (0..m)
        .map(|_| Pose::new(common::random_rotation(rng), common::gaussian3(rng, 5.0)))
        .collect()
}

/// Cameras whose y axes all point along world y.
fn y_shared_poses(rng: &mut impl Rng, m: usize) -> Vec<Pose> {
    (0..m)
        .map(|_| {
            let yaw = rng.gen_range(-std::f64::consts::PI..std::f64::consts::PI);
            Pose::new(
                Rotation::from_axis_angle(&Vec3::new(0.0, yaw, 0.0)),
                common::gaussian3(rng, 5.0),
            )
        })
        .collect()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn truth_solves_the_constraints(seed in 0u64..100_000, m in 3usize..=10) {
        let mut rng = common::rng(seed);
        let poses = random_poses(&mut rng, m);
        let f = rng.gen_range(0.5..2.0);
        let ks: Vec<_> = (0..m).map(|_| ImaginaryIntrinsics::from_params(f, &random_rs(&mut rng)).unwrap()).collect();
        let p_inf = common::gaussian3(&mut rng, 0.1);
        let cams = projective_cameras_from_metric(&poses, &ks, &p_inf).unwrap();
        let truth = CalibUnknowns { omega1: diac_from_imaginary_K(&ks[0]), p_inf };
        let f_list = vec![f; m];
        prop_assert!(max_residual(&cams, &truth, &f_list).unwrap() <= 1e-10);
        let report = cms_nullity(&cams, &truth, &f_list, &NullityConfig::default()).unwrap();
        prop_assert_eq!(report.nullity, 0);
    }

    #[test]
    fn shared_y_axis_is_critical(seed in 0u64..100_000, m in 3usize..=8) {
        let mut rng = common::rng(seed);
        let poses = y_shared_poses(&mut rng, m);
        let rs: Vec<_> = (0..m).map(|_| random_rs(&mut rng)).collect();
        let report = cms_check_trajectory(&poses, &rs, &NullityConfig::default()).unwrap();
        prop_assert!(report.is_cms && report.nullity >= 1);
    }

    #[test]
    fn nullity_ignores_uniform_scaling(
        values in prop::collection::vec(0.0f64..10.0, 8),
        scale in 1e-6f64..1e6,
    ) {
        let a = NullityReport::from_singular_values(values.clone(), 1e-3);
        let b = NullityReport::from_singular_values(values.iter().map(|v| v * scale).collect(), 1e-3);
        prop_assert_eq!(a.nullity, b.nullity);
    }

    #[test]
    fn gauge_family_leaves_images_unchanged(seed in 0u64..100_000, k in 0.1f64..10.0) {
        let mut rng = common::rng(seed);
        let cams: Vec<SharedAxisCamera> = (0..4)
            .map(|_| SharedAxisCamera {
                f: rng.gen_range(500.0..2000.0),
                yaw: rng.gen_range(-1.0..1.0),
                t: Vec3::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0), rng.gen_range(8.0..12.0)),
                s: rng.gen_range(-0.05..0.05),
                alpha: 1.0 + rng.gen_range(-0.05..0.05),
            })
            .collect();
        let points: Vec<Vec3> = (0..20).map(|_| common::gaussian3(&mut rng, 2.0)).collect();
        let (p2, c2) = prop3_gauge_transform(&points, &cams, k);
        for (c, d) in cams.iter().zip(&c2) {
            for (x, y) in points.iter().zip(&p2) {
                let (u1, v1) = c.project(x);
                let (u2, v2) = d.project(y);
                prop_assert!((u1 - u2).abs() <= 1e-9 * u1.abs().max(1.0));
                prop_assert!((v1 - v2).abs() <= 1e-9 * v1.abs().max(1.0));
            }
        }
    }
}
