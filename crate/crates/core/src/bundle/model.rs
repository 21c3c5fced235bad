//! Per-observation projection models and their analytic derivatives.

use nalgebra::{Matrix2, Matrix2x3, SMatrix};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geom::{pinhole_normalize, skew_symmetric, Intrinsics, NormalizedPoint, Pixel, Pose, Vec3};
use crate::rs_models::{
    rotation_only_from_normalized, rotation_only_row, two_step_from_normalized, RowCoord, RsParams,
};

/// Parameters per camera: rotation increment (3), position (3), RS (3).
pub const CAM_DOF: usize = 9;

pub type CameraJacobian = SMatrix<f64, 2, CAM_DOF>;
pub type PointJacobian = Matrix2x3<f64>;

/// The bundle-adjustment method.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Variant {
    /// Plain pinhole; RS parameters are ignored.
    #[serde(rename = "no-rs")]
    NoRs,
    /// Two-step model with all RS parameters free.
    #[serde(rename = "rs")]
    TwoStep,
    /// Two-step model with one RS parameter of one camera held at zero.
    #[serde(rename = "rs-star")]
    TwoStepAnchored,
    /// Rotation-only linearized model solved exactly for the row.
    #[serde(rename = "rs-exact")]
    LinearizedExact,
}

impl Variant {
    pub const ALL: [Variant; 4] = [
        Variant::NoRs,
        Variant::TwoStep,
        Variant::TwoStepAnchored,
        Variant::LinearizedExact,
    ];

    pub fn name(&self) -> &'static str {
        match self {
            Variant::NoRs => "no-rs",
            Variant::TwoStep => "rs",
            Variant::TwoStepAnchored => "rs-star",
            Variant::LinearizedExact => "rs-exact",
        }
    }

    pub fn estimates_rs(&self) -> bool {
        !matches!(self, Variant::NoRs)
    }
}

impl std::fmt::Display for Variant {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

impl std::str::FromStr for Variant {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        Variant::ALL.into_iter().find(|v| v.name() == s).ok_or_else(|| {
            Error::InvalidInput(format!(
                "unknown variant '{s}' (expected no-rs, rs, rs-star or rs-exact)"
            ))
        })
    }
}

/// State of one camera during adjustment. The intrinsics stay fixed.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CameraState {
    pub pose: Pose,
    pub rs: RsParams,
    pub intrinsics: Intrinsics,
}

impl CameraState {
    pub fn new(pose: Pose, rs: RsParams, intrinsics: Intrinsics) -> Self {
        CameraState { pose, rs, intrinsics }
    }
}

/// Normalized-plane model: `(c, r)`, `∂(c,r)/∂(x',y')` and `∂(c,r)/∂φ`.
fn normalized_model(
    variant: Variant,
    pt: &NormalizedPoint,
    rs: &RsParams,
) -> Result<(RowCoord, Matrix2<f64>, Matrix2x3<f64>)> {
    let (xp, yp) = (pt.xp, pt.yp);
    match variant {
        Variant::NoRs => Ok((RowCoord::new(xp, yp), Matrix2::identity(), Matrix2x3::zeros())),
        Variant::TwoStep | Variant::TwoStepAnchored => {
            let RsParams { phi1, phi2, phi3 } = *rs;
            let rc = two_step_from_normalized(pt, rs);
            let ypp = yp + phi3 * xp * yp;
            let d_dist = Matrix2::new(1.0, -2.0 * phi3 * yp, phi3 * yp, 1.0 + phi3 * xp);
            let d_proj = Matrix2::new(1.0, phi2, 0.0, 1.0 - phi1);
            let d_phi = Matrix2x3::new(0.0, ypp, -yp * yp + phi2 * xp * yp, -ypp, 0.0, (1.0 - phi1) * xp * yp);
            Ok((rc, d_proj * d_dist, d_phi))
        }
        Variant::LinearizedExact => {
            let phi = rs.as_vec3();
            let (p1, p2, p3) = (phi.x, phi.y, phi.z);
            let rc = rotation_only_from_normalized(pt, &phi)?;
            let r = rotation_only_row(pt, &phi)?;
            // F(r) = a r² + b r − y' = 0
            let a = p1 * yp - p2 * xp;
            let b = 1.0 + p1 - p3 * xp;
            let df_dr = 2.0 * a * r + b;
            if df_dr.abs() < 1e-300 {
                return Err(Error::NoRealRoot { discriminant: 0.0 });
            }
            // Order: x', y', φ₁, φ₂, φ₃.
            let df = [
                -p2 * r * r - p3 * r,
                p1 * r * r - 1.0,
                r * r * yp + r,
                -r * r * xp,
                -r * xp,
            ];
            let dr: [f64; 5] = df.map(|d| -d / df_dr);

            let num = xp - r * p3 * yp + r * p2;
            let den = 1.0 - r * p2 * xp + r * p1 * yp;
            let dnum_dr = -p3 * yp + p2;
            let dden_dr = -p2 * xp + p1 * yp;
            let dnum = [1.0, -r * p3, 0.0, r, -r * yp];
            let dden = [-r * p2, r * p1, r * yp, -r * xp, 0.0];
            let mut dc = [0.0; 5];
            for i in 0..5 {
                let n = dnum[i] + dnum_dr * dr[i];
                let d = dden[i] + dden_dr * dr[i];
                dc[i] = (n * den - num * d) / (den * den);
            }
            let d_pt = Matrix2::new(dc[0], dc[1], dr[0], dr[1]);
            let d_phi = Matrix2x3::new(dc[2], dc[3], dc[4], dr[2], dr[3], dr[4]);
            Ok((rc, d_pt, d_phi))
        }
    }
}

/// Predicted pixel of world point `x` in `cam` under `variant`.
pub fn project(variant: Variant, cam: &CameraState, x: &Vec3) -> Result<Pixel> {
    let pt = pinhole_normalize(&cam.pose.world_to_camera(x))?;
    let rc = match variant {
        Variant::NoRs => RowCoord::new(pt.xp, pt.yp),
        Variant::TwoStep | Variant::TwoStepAnchored => two_step_from_normalized(&pt, &cam.rs),
        Variant::LinearizedExact => rotation_only_from_normalized(&pt, &cam.rs.as_vec3())?,
    };
    Ok(cam.intrinsics.apply(rc.c, rc.r))
}

/// Prediction with derivatives. Camera columns are ordered
/// `[δθ (left rotation increment), p, φ]`.
pub fn project_with_jacobian(
    variant: Variant,
    cam: &CameraState,
    x: &Vec3,
) -> Result<(Pixel, CameraJacobian, PointJacobian)> {
    let rot = cam.pose.rotation.matrix();
    let xc = cam.pose.world_to_camera(x);
    let pt = pinhole_normalize(&xc)?;
    let (rc, d_pt, d_phi) = normalized_model(variant, &pt, &cam.rs)?;
    let Intrinsics { f, .. } = cam.intrinsics;
    let iz = 1.0 / xc.z;
    let d_norm = Matrix2x3::new(iz, 0.0, -xc.x * iz * iz, 0.0, iz, -xc.y * iz * iz);
    let d_cam = d_pt * d_norm * f;

    let mut jc = CameraJacobian::zeros();
    jc.fixed_view_mut::<2, 3>(0, 0)
        .copy_from(&(d_cam * (-skew_symmetric(&xc))));
    jc.fixed_view_mut::<2, 3>(0, 3).copy_from(&(d_cam * (-rot)));
    jc.fixed_view_mut::<2, 3>(0, 6).copy_from(&(d_phi * f));
    let jp = d_cam * rot;
    Ok((cam.intrinsics.apply(rc.c, rc.r), jc, jp))
}

/// Applies a camera increment `[δθ, δp, δφ]`.
pub fn retract_camera(cam: &CameraState, delta: &[f64]) -> CameraState {
    let dtheta = Vec3::new(delta[0], delta[1], delta[2]);
    let rotation = crate::geom::Rotation::from_axis_angle(&dtheta) * cam.pose.rotation;
    let position = cam.pose.position + Vec3::new(delta[3], delta[4], delta[5]);
    let rs = RsParams::new(cam.rs.phi1 + delta[6], cam.rs.phi2 + delta[7], cam.rs.phi3 + delta[8]);
    CameraState::new(Pose::new(rotation, position), rs, cam.intrinsics)
}
