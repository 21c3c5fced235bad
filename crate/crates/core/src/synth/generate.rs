use rand::Rng;
use rand_distr::{Distribution, Normal};

use super::scene::{random_unit_vector, Scene};
use super::TrialConfig;
use crate::bundle::{Observation, MIN_OBS_PER_CAMERA};
use crate::error::{Error, Result};
use crate::rs_models::{project_full_rs, project_two_step, RsMotion, RsParams};

fn normal(sigma: f64) -> Result<Normal<f64>> {
    Normal::new(0.0, sigma).map_err(|e| Error::InvalidInput(format!("invalid standard deviation {sigma}: {e}")))
}

/// Random intra-frame motion. The rotation angle over the image,
/// `row_extent·|φ|`, is half-normal with scale `sigma_rot`; the axis is
/// uniform on the sphere.
pub fn generate_rs_motion<R: Rng + ?Sized>(
    rng: &mut R,
    cfg: &TrialConfig,
    mean_step: f64,
    row_extent: f64,
) -> Result<RsMotion> {
    if !(row_extent > 0.0) {
        return Err(Error::InvalidInput(format!(
            "row_extent must be positive, got {row_extent}"
        )));
    }
    let theta: f64 = normal(cfg.sigma_rot)?.sample(rng);
    let axis = random_unit_vector(rng);
    let phi = axis * (theta.abs() / row_extent);
    let nv = normal(cfg.sigma_trans * mean_step)?;
    let v = crate::geom::Vec3::new(nv.sample(rng), nv.sample(rng), nv.sample(rng)) / row_extent;
    Ok(RsMotion::new(phi, v))
}

/// One motion per camera; the first is zero when `first_image_clean`.
pub fn generate_motions<R: Rng + ?Sized>(rng: &mut R, scene: &Scene, cfg: &TrialConfig) -> Result<Vec<RsMotion>> {
    let (step, extent) = (scene.mean_step(), scene.row_extent());
    (0..scene.trajectory.len())
        .map(|i| {
            let m = generate_rs_motion(rng, cfg, step, extent)?;
            Ok(if i == 0 && cfg.first_image_clean {
                RsMotion::zero()
            } else {
                m
            })
        })
        .collect()
}

/// Camera model used to render synthetic observations.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ObservationModel {
    /// Constant-velocity RS model with exact rotation and translation.
    #[default]
    Full,
    /// Two-step model driven by the rotational part only.
    TwoStep,
}

/// Projects every point into every camera, adds Gaussian pixel noise and
/// drops points that fall outside the image or behind the camera.
pub fn synthesize_observations<R: Rng + ?Sized>(
    rng: &mut R,
    scene: &Scene,
    motions: &[RsMotion],
    noise_sigma: f64,
    model: ObservationModel,
) -> Result<Vec<Observation>> {
    if motions.len() != scene.trajectory.len() {
        return Err(Error::InvalidInput(format!(
            "{} motions for {} cameras",
            motions.len(),
            scene.trajectory.len()
        )));
    }
    let noise = normal(noise_sigma)?;
    let mut obs = Vec::new();
    for (i, (pose, motion)) in scene.trajectory.iter().zip(motions).enumerate() {
        let mut kept = 0;
        for (j, x) in scene.points.iter().enumerate() {
            let px = match model {
                ObservationModel::Full => project_full_rs(pose, motion, &scene.intrinsics, x),
                ObservationModel::TwoStep => project_two_step(pose, &motion.params(), &scene.intrinsics, x),
            };
            let Ok(px) = px else { continue };
            if !scene.in_image(px.x, px.y, 0.0) {
                continue;
            }
            let (du, dv) = (noise.sample(rng), noise.sample(rng));
            obs.push(Observation::new(i, j, px.x + du, px.y + dv));
            kept += 1;
        }
        if kept < MIN_OBS_PER_CAMERA {
            return Err(Error::InsufficientCoverage {
                camera: i,
                kept,
                required: MIN_OBS_PER_CAMERA,
            });
        }
    }
    Ok(obs)
}

/// Two-step parameters carried by a list of motions.
pub fn motion_params(motions: &[RsMotion]) -> Vec<RsParams> {
    motions.iter().map(RsMotion::params).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::synth::{ScenePreset, SceneSpec};
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn zero_sigmas_give_zero_motion() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let cfg = TrialConfig {
            sigma_rot: 0.0,
            sigma_trans: 0.0,
            ..TrialConfig::default()
        };
        for _ in 0..10 {
            let m = generate_rs_motion(&mut rng, &cfg, 2.0, 0.768).unwrap();
            assert_eq!(m.phi.norm(), 0.0);
            assert_eq!(m.v.norm(), 0.0);
        }
    }

    #[test]
    fn bad_row_extent_is_rejected() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        assert!(generate_rs_motion(&mut rng, &TrialConfig::default(), 1.0, 0.0).is_err());
    }

    #[test]
    fn zero_motion_zero_noise_is_pinhole() {
        let scene = SceneSpec::new(ScenePreset::Generic, 4).build().unwrap();
        let motions = vec![RsMotion::zero(); scene.trajectory.len()];
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let obs = synthesize_observations(&mut rng, &scene, &motions, 0.0, ObservationModel::Full).unwrap();
        assert_eq!(obs.len(), scene.points.len() * scene.trajectory.len());
        for o in &obs {
            let px = crate::rs_models::project_pinhole(
                &scene.trajectory[o.cam_id],
                &scene.intrinsics,
                &scene.points[o.pt_id],
            )
            .unwrap();
            assert!((px.x - o.u).abs() < 1e-9 && (px.y - o.v).abs() < 1e-9);
        }
    }

    #[test]
    fn first_motion_is_clean() {
        let scene = SceneSpec::new(ScenePreset::LowElevation, 4).build().unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let m = generate_motions(&mut rng, &scene, &TrialConfig::default()).unwrap();
        assert_eq!(m[0], RsMotion::zero());
        assert!(m[1].phi.norm() > 0.0);
    }

    #[test]
    fn coverage_failure_is_reported() {
        let mut scene = SceneSpec::new(ScenePreset::Generic, 4).build().unwrap();
        scene.points.truncate(5);
        let motions = vec![RsMotion::zero(); scene.trajectory.len()];
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let err = synthesize_observations(&mut rng, &scene, &motions, 0.0, ObservationModel::Full).unwrap_err();
        assert!(matches!(
            err,
            Error::InsufficientCoverage {
                camera: 0,
                kept: 5,
                required: 6
            }
        ));
    }
}
