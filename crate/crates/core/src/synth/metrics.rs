use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geom::{similarity_align, Pose, Similarity, Vec3};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Metrics {
    pub rot_err: f64,
    pub trans_err: f64,
    pub struct_err: f64,
    pub struct_err_mean: f64,
}

impl Metrics {
    pub fn nan() -> Self {
        Metrics {
            rot_err: f64::NAN,
            trans_err: f64::NAN,
            struct_err: f64::NAN,
            struct_err_mean: f64::NAN,
        }
    }
}

/// Mean angle of `Rᵢ R̂ᵢᵀ` over the cameras.
pub fn rotation_error(truth: &[Pose], est: &[Pose]) -> Result<f64> {
    check_lengths(truth.len(), est.len())?;
    if truth.is_empty() {
        return Ok(0.0);
    }
    let sum: f64 = truth
        .iter()
        .zip(est)
        .map(|(t, e)| (t.rotation * e.rotation.inverse()).angle().abs())
        .sum();
    Ok(sum / truth.len() as f64)
}

/// Aligns the estimated camera centres onto the true ones and returns the
/// mean position error together with the fitted similarity.
pub fn translation_error(truth: &[Pose], est: &[Pose]) -> Result<(f64, Similarity)> {
    check_lengths(truth.len(), est.len())?;
    let src: Vec<Vec3> = est.iter().map(|p| p.position).collect();
    let dst: Vec<Vec3> = truth.iter().map(|p| p.position).collect();
    let t = similarity_align(&src, &dst)?;
    let err = src.iter().zip(&dst).map(|(s, d)| (t.apply(s) - d).norm()).sum::<f64>() / src.len() as f64;
    Ok((err, t))
}

/// `(Σⱼ‖Xⱼ − T(X̂ⱼ)‖, mean)`.
pub fn structure_error(truth: &[Vec3], est: &[Vec3], alignment: &Similarity) -> Result<(f64, f64)> {
    check_lengths(truth.len(), est.len())?;
    let sum: f64 = truth
        .iter()
        .zip(est)
        .map(|(x, e)| (x - alignment.apply(e)).norm())
        .sum();
    let mean = if truth.is_empty() {
        0.0
    } else {
        sum / truth.len() as f64
    };
    Ok((sum, mean))
}

/// All three metrics, with rotations compared after the trajectory alignment.
pub fn evaluate(truth_poses: &[Pose], truth_pts: &[Vec3], est_poses: &[Pose], est_pts: &[Vec3]) -> Result<Metrics> {
    let (trans_err, t) = translation_error(truth_poses, est_poses)?;
    let aligned: Vec<Pose> = est_poses.iter().map(|p| t.apply_pose(p)).collect();
    let rot_err = rotation_error(truth_poses, &aligned)?;
    let (struct_err, struct_err_mean) = structure_error(truth_pts, est_pts, &t)?;
    Ok(Metrics {
        rot_err,
        trans_err,
        struct_err,
        struct_err_mean,
    })
}

fn check_lengths(a: usize, b: usize) -> Result<()> {
    if a != b {
        return Err(Error::InvalidInput(format!("length mismatch: {a} vs {b}")));
    }
    Ok(())
}
