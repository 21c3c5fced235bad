//! Rolling-shutter projection models.
//!
//! All models work in normalized (pre-intrinsics) coordinates: `(c, r)` are
//! the column and row of the normalized image plane, so `φ` is measured in
//! radians per normalized row. The shutter row `r = 0` is the principal row,
//! where the camera sits exactly at its pose.
//!
//! * [`project_full_rs`]: exact constant-motion model with rotation `R(rφ)`
//!   and translation `r·v` during readout. Used to synthesize ground truth.
//! * [`project_linearized_rs`]: same with `R(rφ) ≈ I + r[φ]×`.
//! * [`project_rotation_only_rs`]: linearized rotation and `v = 0`, solved in
//!   closed form.
//! * [`project_two_step`]: the distortion `f_d` followed by the imaginary
//!   camera `f_p`, whose skew and aspect ratio carry `φ₂` and `1 − φ₁`.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geom::{
    pinhole_normalize, skew_symmetric, Intrinsics, Mat3, NormalizedPoint, Pixel, Pose, Rotation, Vec3, Z_MIN,
};

/// Convergence tolerance of the implicit row solver.
pub const ROW_TOLERANCE: f64 = 1e-12;
/// Iteration cap of the implicit row solver.
pub const ROW_MAX_ITERS: usize = 50;

/// Intra-frame motion: angular rate `phi` and translation rate `v`, both per
/// normalized row unit.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct RsMotion {
    pub phi: Vec3,
    pub v: Vec3,
}

impl RsMotion {
    pub fn new(phi: Vec3, v: Vec3) -> Self {
        RsMotion { phi, v }
    }

    pub fn zero() -> Self {
        Self::default()
    }

    /// Two-step parameters carried by the rotational part.
    pub fn params(&self) -> RsParams {
        RsParams::new(self.phi.x, self.phi.y, self.phi.z)
    }
}

/// Parameters of the two-step model.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct RsParams {
    pub phi1: f64,
    pub phi2: f64,
    pub phi3: f64,
}

impl RsParams {
    pub fn new(phi1: f64, phi2: f64, phi3: f64) -> Self {
        RsParams { phi1, phi2, phi3 }
    }

    pub fn zero() -> Self {
        Self::default()
    }

    pub fn as_array(&self) -> [f64; 3] {
        [self.phi1, self.phi2, self.phi3]
    }

    pub fn from_array(a: [f64; 3]) -> Self {
        RsParams::new(a[0], a[1], a[2])
    }

    pub fn as_vec3(&self) -> Vec3 {
        Vec3::new(self.phi1, self.phi2, self.phi3)
    }

    pub fn max_abs(&self) -> f64 {
        self.phi1.abs().max(self.phi2.abs()).max(self.phi3.abs())
    }
}

/// Imaginary camera with principal point at the origin:
/// `K = [[f, s f, 0], [0, α f, 0], [0, 0, 1]]`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ImaginaryIntrinsics {
    pub f: f64,
    pub s: f64,
    pub alpha: f64,
}

impl ImaginaryIntrinsics {
    pub fn new(f: f64, s: f64, alpha: f64) -> Result<Self> {
        if !(f > 0.0 && alpha > 0.0 && s.is_finite() && f.is_finite() && alpha.is_finite()) {
            return Err(Error::InvalidInput(format!(
                "invalid imaginary intrinsics f={f} s={s} alpha={alpha}"
            )));
        }
        Ok(ImaginaryIntrinsics { f, s, alpha })
    }

    /// The imaginary camera of a true camera with focal length `f` and
    /// two-step parameters `params`: skew `φ₂`, aspect `1 − φ₁`.
    pub fn from_params(f: f64, params: &RsParams) -> Result<Self> {
        Self::new(f, params.phi2, 1.0 - params.phi1)
    }

    pub fn matrix(&self) -> Mat3 {
        Mat3::new(
            self.f,
            self.s * self.f,
            0.0, //
            0.0,
            self.alpha * self.f,
            0.0, //
            0.0,
            0.0,
            1.0,
        )
    }
}

/// Normalized column/row coordinates.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct RowCoord {
    pub c: f64,
    pub r: f64,
}

impl RowCoord {
    pub fn new(c: f64, r: f64) -> Self {
        RowCoord { c, r }
    }
}

/// Solves `r = y(r)/z(r)` for a row-dependent ray `ray(r)`, seeded at `r0`.
///
/// Fixed-point iteration first; falls back to a safeguarded Newton step on
/// `g(r) = y/z − r` when the fixed point stops contracting.
fn solve_row<F>(ray: F, r0: f64) -> Result<(f64, Vec3)>
where
    F: Fn(f64) -> Vec3,
{
    let eval = |r: f64| -> Result<(f64, Vec3)> {
        let x = ray(r);
        if !(x.z > Z_MIN) {
            return Err(Error::CheiralityViolation { depth: x.z });
        }
        Ok((x.y / x.z - r, x))
    };

    let mut r = r0;
    let mut prev_step = f64::INFINITY;
    let mut newton = false;
    let mut g = eval(r)?.0;
    for _ in 0..ROW_MAX_ITERS {
        if g.abs() <= ROW_TOLERANCE * (1.0 + r.abs()) {
            let (g, x) = eval(r)?;
            return Ok((r + g, x));
        }
        let step = if newton {
            let h = 1e-7 * (1.0 + r.abs());
            let dg = (eval(r + h)?.0 - eval(r - h)?.0) / (2.0 * h);
            if dg.abs() < 1e-300 {
                g
            } else {
                -g / dg
            }
        } else {
            g
        };
        if !newton && step.abs() >= prev_step.abs() {
            newton = true;
            continue;
        }
        // Halve Newton steps that do not reduce |g|.
        let mut t = 1.0;
        let mut next = r + step;
        let mut g_next = eval(next).map(|e| e.0);
        if newton {
            while t > 1e-6 && !matches!(g_next, Ok(gn) if gn.abs() < g.abs()) {
                t *= 0.5;
                next = r + t * step;
                g_next = eval(next).map(|e| e.0);
            }
        }
        prev_step = step;
        r = next;
        g = g_next?;
    }
    if g.abs() <= 1e-10 {
        let (g, x) = eval(r)?;
        return Ok((r + g, x));
    }
    Err(Error::NoConvergence {
        iterations: ROW_MAX_ITERS,
        residual: g.abs(),
    })
}

fn row_coord_from_ray(x: &Vec3) -> RowCoord {
    RowCoord::new(x.x / x.z, x.y / x.z)
}

/// Exact constant-motion model in normalized coordinates:
/// `[c, r, 1] ∝ R(rφ) R (X − p − r v)`.
pub fn project_full_rs_normalized(pose: &Pose, motion: &RsMotion, x: &Vec3) -> Result<RowCoord> {
    let seed = pinhole_normalize(&pose.world_to_camera(x))?;
    let (_, ray) = solve_row(
        |r| Rotation::from_axis_angle(&(motion.phi * r)).apply(&pose.world_to_camera(&(x - motion.v * r))),
        seed.yp,
    )?;
    Ok(row_coord_from_ray(&ray))
}

/// [`project_full_rs_normalized`] followed by the intrinsics.
pub fn project_full_rs(pose: &Pose, motion: &RsMotion, k: &Intrinsics, x: &Vec3) -> Result<Pixel> {
    let rc = project_full_rs_normalized(pose, motion, x)?;
    Ok(k.apply(rc.c, rc.r))
}

/// Linearized-rotation model: `[c, r, 1] ∝ (I + r[φ]×) R (X − p − r v)`.
pub fn project_linearized_rs(pose: &Pose, motion: &RsMotion, x: &Vec3) -> Result<RowCoord> {
    let seed = pinhole_normalize(&pose.world_to_camera(x))?;
    let phi_x = skew_symmetric(&motion.phi);
    let (_, ray) = solve_row(
        |r| {
            let xc = pose.world_to_camera(&(x - motion.v * r));
            xc + phi_x * xc * r
        },
        seed.yp,
    )?;
    Ok(row_coord_from_ray(&ray))
}

/// Implicit-row residual of the full model at `rc`: the distance between
/// `(c, r)` and the normalized projection of the ray evaluated at row `r`.
pub fn full_rs_residual(pose: &Pose, motion: &RsMotion, x: &Vec3, rc: &RowCoord) -> f64 {
    let ray = Rotation::from_axis_angle(&(motion.phi * rc.r)).apply(&pose.world_to_camera(&(x - motion.v * rc.r)));
    (ray.x / ray.z - rc.c).abs().max((ray.y / ray.z - rc.r).abs())
}

/// Implicit-row residual of the linearized model at `rc`.
pub fn linearized_rs_residual(pose: &Pose, motion: &RsMotion, x: &Vec3, rc: &RowCoord) -> f64 {
    let xc = pose.world_to_camera(&(x - motion.v * rc.r));
    let ray = xc + skew_symmetric(&motion.phi) * xc * rc.r;
    (ray.x / ray.z - rc.c).abs().max((ray.y / ray.z - rc.r).abs())
}

/// Coefficients `(a, b, c)` of the row quadratic `a r² + b r + c = 0` for the
/// rotation-only model.
pub(crate) fn rotation_only_quadratic(pt: &NormalizedPoint, phi: &Vec3) -> (f64, f64, f64) {
    let (xp, yp) = (pt.xp, pt.yp);
    (phi.x * yp - phi.y * xp, 1.0 + phi.x - phi.z * xp, -yp)
}

/// Root of the row quadratic closest to the pinhole row `y'`.
pub(crate) fn rotation_only_row(pt: &NormalizedPoint, phi: &Vec3) -> Result<f64> {
    let (a, b, c) = rotation_only_quadratic(pt, phi);
    if a == 0.0 {
        if b == 0.0 {
            return Err(Error::NoRealRoot { discriminant: 0.0 });
        }
        return Ok(-c / b);
    }
    let disc = b * b - 4.0 * a * c;
    if disc < 0.0 {
        return Err(Error::NoRealRoot { discriminant: disc });
    }
    let q = -0.5 * (b + b.signum() * disc.sqrt());
    if q == 0.0 {
        return Ok(0.0);
    }
    let r1 = q / a;
    let r2 = c / q;
    Ok(if (r1 - pt.yp).abs() < (r2 - pt.yp).abs() {
        r1
    } else {
        r2
    })
}

/// Rotation-only model on a normalized point: `[c, r, 1] ∝ (I + r[φ]×) [x', y', 1]`.
pub fn rotation_only_from_normalized(pt: &NormalizedPoint, phi: &Vec3) -> Result<RowCoord> {
    let r = rotation_only_row(pt, phi)?;
    let w = 1.0 + r * (phi.x * pt.yp - phi.y * pt.xp);
    if !(w > Z_MIN) {
        return Err(Error::CheiralityViolation { depth: w });
    }
    let c = (pt.xp - r * phi.z * pt.yp + r * phi.y) / w;
    Ok(RowCoord::new(c, r))
}

/// Rotation-only linearized model (`v = 0`), solved in closed form.
pub fn project_rotation_only_rs(pose: &Pose, phi: &Vec3, x: &Vec3) -> Result<RowCoord> {
    let pt = pinhole_normalize(&pose.world_to_camera(x))?;
    rotation_only_from_normalized(&pt, phi)
}

/// Distortion step: `x'' = x' − φ₃ y'²`, `y'' = y' + φ₃ x' y'`.
pub fn apply_f_d(pt: &NormalizedPoint, phi3: f64) -> NormalizedPoint {
    NormalizedPoint::new(pt.xp - phi3 * pt.yp * pt.yp, pt.yp + phi3 * pt.xp * pt.yp)
}

/// Skew/aspect step: `c = x'' + φ₂ y''`, `r = (1 − φ₁) y''`.
pub fn apply_f_p(pt: &NormalizedPoint, phi1: f64, phi2: f64) -> RowCoord {
    RowCoord::new(pt.xp + phi2 * pt.yp, (1.0 - phi1) * pt.yp)
}

/// `f_p ∘ f_d` on a normalized point.
pub fn two_step_from_normalized(pt: &NormalizedPoint, params: &RsParams) -> RowCoord {
    apply_f_p(&apply_f_d(pt, params.phi3), params.phi1, params.phi2)
}

/// Two-step model through the true intrinsics.
pub fn project_two_step(pose: &Pose, params: &RsParams, k: &Intrinsics, x: &Vec3) -> Result<Pixel> {
    let pt = pinhole_normalize(&pose.world_to_camera(x))?;
    let rc = two_step_from_normalized(&pt, params);
    Ok(k.apply(rc.c, rc.r))
}

/// First-order expansion of the two-step model in `φ`.
pub fn two_step_first_order(pt: &NormalizedPoint, params: &RsParams) -> RowCoord {
    let (xp, yp) = (pt.xp, pt.yp);
    RowCoord::new(
        xp + params.phi2 * yp - params.phi3 * yp * yp,
        yp - params.phi1 * yp + params.phi3 * xp * yp,
    )
}

/// Intrinsic matrix of the imaginary camera:
/// `[[f, φ₂ f, u₀], [0, (1 − φ₁) f, v₀], [0, 0, 1]]`.
#[allow(non_snake_case)]
pub fn imaginary_K(k: &Intrinsics, phi1: f64, phi2: f64) -> Mat3 {
    Mat3::new(
        k.f,
        phi2 * k.f,
        k.u0, //
        0.0,
        (1.0 - phi1) * k.f,
        k.v0, //
        0.0,
        0.0,
        1.0,
    )
}

/// Plain pinhole projection through `k`.
pub fn project_pinhole(pose: &Pose, k: &Intrinsics, x: &Vec3) -> Result<Pixel> {
    let pt = pinhole_normalize(&pose.world_to_camera(x))?;
    Ok(k.apply(pt.xp, pt.yp))
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use proptest::prelude::*;

    fn pose_a() -> Pose {
        Pose::new(
            Rotation::from_axis_angle(&Vec3::new(0.1, -0.2, 0.05)),
            Vec3::new(0.3, -0.1, -5.0),
        )
    }

    #[test]
    fn f_d_cases() {
        let p = NormalizedPoint::new(0.2, 0.1);
        assert_eq!(apply_f_d(&p, 0.0), p);
        let d = apply_f_d(&p, 0.05);
        assert_relative_eq!(d.xp, 0.1995, epsilon = 1e-15);
        assert_relative_eq!(d.yp, 0.101, epsilon = 1e-15);
        let z = apply_f_d(&NormalizedPoint::new(0.4, 0.0), 0.3);
        assert_eq!((z.xp, z.yp), (0.4, 0.0));
    }

    #[test]
    fn f_p_cases() {
        let p = NormalizedPoint::new(0.1995, 0.101);
        assert_eq!(apply_f_p(&p, 0.0, 0.0), RowCoord::new(0.1995, 0.101));
        let rc = apply_f_p(&p, 0.02, 0.03);
        assert_relative_eq!(rc.c, 0.20253, epsilon = 1e-15);
        assert_relative_eq!(rc.r, 0.09898, epsilon = 1e-15);
        let rc = apply_f_p(&NormalizedPoint::new(0.3, 0.0), 0.1, 0.1);
        assert_eq!(rc, RowCoord::new(0.3, 0.0));
    }

    #[test]
    fn first_order_hand_values() {
        let p = NormalizedPoint::new(0.2, 0.1);
        assert_eq!(two_step_first_order(&p, &RsParams::zero()), RowCoord::new(0.2, 0.1));
        let rc = two_step_first_order(&p, &RsParams::new(0.02, 0.03, 0.05));
        assert_relative_eq!(rc.c, 0.2025, epsilon = 1e-15);
        assert_relative_eq!(rc.r, 0.099, epsilon = 1e-15);
    }

    #[test]
    fn imaginary_k_values() {
        let k = Intrinsics::new(1000.0, 0.0, 0.0).unwrap();
        assert_eq!(imaginary_K(&k, 0.0, 0.0), k.matrix());
        let m = imaginary_K(&k, 0.02, 0.03);
        assert_relative_eq!(
            m,
            Mat3::new(1000.0, 30.0, 0.0, 0.0, 980.0, 0.0, 0.0, 0.0, 1.0),
            epsilon = 1e-12
        );
    }

    #[test]
    fn rotation_only_hand_solve() {
        // φ = (0, 0, φ₃), x' = 0: r = y', c = −φ₃ y'².
        let pt = NormalizedPoint::new(0.0, 0.2);
        let rc = rotation_only_from_normalized(&pt, &Vec3::new(0.0, 0.0, 0.07)).unwrap();
        assert_relative_eq!(rc.r, 0.2, epsilon = 1e-16);
        assert_relative_eq!(rc.c, -0.07 * 0.04, epsilon = 1e-16);
        let rc = rotation_only_from_normalized(&NormalizedPoint::new(0.13, -0.21), &Vec3::zeros()).unwrap();
        assert_eq!(rc, RowCoord::new(0.13, -0.21));
    }

    #[test]
    fn rotation_only_no_real_root() {
        // b² + 4 a y' = 1 − 4 φ₂ x' y'² < 0.
        let pt = NormalizedPoint::new(1.0, 1.0);
        let phi = Vec3::new(0.0, 1.0, 0.0);
        assert!(matches!(
            rotation_only_from_normalized(&pt, &phi),
            Err(Error::NoRealRoot { .. })
        ));
    }

    #[test]
    fn zero_motion_containment() {
        let k = Intrinsics::new(800.0, 400.0, 300.0).unwrap();
        let pose = pose_a();
        let x = Vec3::new(0.5, -0.4, 3.0);
        let pin = project_pinhole(&pose, &k, &x).unwrap();
        let full = project_full_rs(&pose, &RsMotion::zero(), &k, &x).unwrap();
        let lin = project_linearized_rs(&pose, &RsMotion::zero(), &x).unwrap();
        let two = project_two_step(&pose, &RsParams::zero(), &k, &x).unwrap();
        let lin_px = k.apply(lin.c, lin.r);
        assert!((full - pin).amax() <= 1e-12 * k.f);
        assert!((lin_px - pin).amax() <= 1e-12 * k.f);
        assert!((two - pin).amax() <= 1e-12 * k.f);
    }

    #[test]
    fn row_zero_is_fixed() {
        // Points on the principal row are unaffected when the rotation leaves
        // that row in place.
        let pt = NormalizedPoint::new(0.25, 0.0);
        let p = RsParams::new(0.04, -0.03, 0.05);
        assert_eq!(two_step_from_normalized(&pt, &p), RowCoord::new(0.25, 0.0));
        let rc = rotation_only_from_normalized(&pt, &p.as_vec3()).unwrap();
        assert_eq!(rc.r, 0.0);
        assert_eq!(rc.c, 0.25);
        let pose = Pose::default();
        let x = Vec3::new(0.5, 0.0, 2.0);
        let m = RsMotion::new(p.as_vec3(), Vec3::new(0.1, 0.2, 0.3));
        let full = project_full_rs_normalized(&pose, &m, &x).unwrap();
        assert!(full.r.abs() < 1e-15 && (full.c - 0.25).abs() < 1e-15);
    }

    #[test]
    fn behind_camera_is_rejected() {
        let x = Vec3::new(0.0, 0.0, -1.0);
        let pose = Pose::default();
        let k = Intrinsics::new(1.0, 0.0, 0.0).unwrap();
        assert!(matches!(
            project_two_step(&pose, &RsParams::zero(), &k, &x),
            Err(Error::CheiralityViolation { .. })
        ));
        assert!(matches!(
            project_full_rs(&pose, &RsMotion::zero(), &k, &x),
            Err(Error::CheiralityViolation { .. })
        ));
    }

    #[test]
    fn imaginary_camera_identity() {
        // project_two_step == K_imaginary · (x'', y'', 1).
        let k = Intrinsics::new(950.0, 512.0, 384.0).unwrap();
        let params = RsParams::new(0.03, -0.02, 0.04);
        let pose = pose_a();
        for x in [
            Vec3::new(0.3, 0.2, 1.0),
            Vec3::new(-1.0, 0.5, 2.0),
            Vec3::new(0.0, -0.8, -1.0),
        ] {
            let px = project_two_step(&pose, &params, &k, &x).unwrap();
            let d = apply_f_d(&pinhole_normalize(&pose.world_to_camera(&x)).unwrap(), params.phi3);
            let h = imaginary_K(&k, params.phi1, params.phi2) * Vec3::new(d.xp, d.yp, 1.0);
            assert_relative_eq!(px, Pixel::new(h.x / h.z, h.y / h.z), epsilon = 1e-9);
        }
    }

    proptest! {
        #[test]
        fn implicit_residuals_vanish(
            xp in -0.4f64..0.4, yp in -0.4f64..0.4, depth in 2.0f64..20.0,
            p1 in -0.1f64..0.1, p2 in -0.1f64..0.1, p3 in -0.1f64..0.1,
            v1 in -0.2f64..0.2, v2 in -0.2f64..0.2, v3 in -0.2f64..0.2,
        ) {
            let pose = pose_a();
            let x = pose.camera_to_world(&Vec3::new(xp * depth, yp * depth, depth));
            let m = RsMotion::new(Vec3::new(p1, p2, p3), Vec3::new(v1, v2, v3));
            let full = project_full_rs_normalized(&pose, &m, &x).unwrap();
            prop_assert!(full_rs_residual(&pose, &m, &x, &full) <= 1e-10);
            let lin = project_linearized_rs(&pose, &m, &x).unwrap();
            prop_assert!(linearized_rs_residual(&pose, &m, &x, &lin) <= 1e-10);
            let m0 = RsMotion::new(m.phi, Vec3::zeros());
            let rot = project_rotation_only_rs(&pose, &m.phi, &x).unwrap();
            prop_assert!(linearized_rs_residual(&pose, &m0, &x, &rot) <= 1e-12);
            let lin0 = project_linearized_rs(&pose, &m0, &x).unwrap();
            prop_assert!((lin0.c - rot.c).abs() <= 1e-12 && (lin0.r - rot.r).abs() <= 1e-12);
        }

        #[test]
        fn linearized_close_to_full(
            xp in -0.4f64..0.4, yp in -0.4f64..0.4, depth in 2.0f64..20.0,
            p1 in -0.1f64..0.1, p2 in -0.1f64..0.1, p3 in -0.1f64..0.1,
        ) {
            let pose = pose_a();
            let x = pose.camera_to_world(&Vec3::new(xp * depth, yp * depth, depth));
            let m = RsMotion::new(Vec3::new(p1, p2, p3), Vec3::zeros());
            let full = project_full_rs_normalized(&pose, &m, &x).unwrap();
            let lin = project_linearized_rs(&pose, &m, &x).unwrap();
            let rphi = (m.phi * full.r).norm();
            let d = (full.c - lin.c).hypot(full.r - lin.r);
            prop_assert!(d <= 2.0 * rphi * rphi + 1e-14, "d={d} rphi={rphi}");
        }

        #[test]
        fn two_step_vs_first_order(
            xp in -0.5f64..0.5, yp in -0.5f64..0.5,
            p1 in -0.1f64..0.1, p2 in -0.1f64..0.1, p3 in -0.1f64..0.1,
        ) {
            let pt = NormalizedPoint::new(xp, yp);
            let params = RsParams::new(p1, p2, p3);
            let a = two_step_from_normalized(&pt, &params);
            let b = two_step_first_order(&pt, &params);
            let m = params.max_abs();
            let d = (a.c - b.c).hypot(a.r - b.r);
            prop_assert!(d <= 3.0 * m * m * xp.abs().max(yp.abs()) + 1e-15);
        }
    }
}
