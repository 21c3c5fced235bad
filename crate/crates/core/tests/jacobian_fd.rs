mod common;

use rs_selfcal::bundle::{jacobian, Variant};

const TOL: f64 = 1e-6;

#[test]
fn every_variant_matches_central_differences() {
    for (vi, variant) in Variant::ALL.into_iter().enumerate() {
        let mut rng = common::rng(100 + vi as u64);
        let mut worst = [0.0f64; 4];
        let mut checked = 0;
        for _ in 0..300 {
            let p = common::random_fd_config(&mut rng);
            let Some(e) = common::fd_block_errors(&p, variant) else {
                continue;
            };
            for (w, x) in worst.iter_mut().zip(e) {
                *w = w.max(x);
            }
            checked += 1;
        }
        assert!(checked >= 290, "{variant}: only {checked} configurations projected");
        assert!(worst.iter().all(|&e| e <= TOL), "{variant}: block errors {worst:?}");
    }
}

#[test]
fn no_rs_has_six_camera_columns() {
    let p = common::random_fd_config(&mut common::rng(7));
    let j = jacobian(&p, &p.observations[0], Variant::NoRs).unwrap();
    assert_eq!(j.camera.ncols(), 6);
    for v in [Variant::TwoStep, Variant::TwoStepAnchored, Variant::LinearizedExact] {
        assert_eq!(jacobian(&p, &p.observations[0], v).unwrap().camera.ncols(), 9);
    }
}
