//! Elementary geometry: rotations, poses, intrinsics and similarity alignment.
//!
//! Rotations are stored as 3×3 matrices. The axis-angle vector is the
//! parameterization seen by the optimizer.

use nalgebra::{Matrix3, Vector2, Vector3, SVD};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub type Vec3 = Vector3<f64>;
pub type Mat3 = Matrix3<f64>;
/// Pixel coordinates `(u, v)`.
pub type Pixel = Vector2<f64>;

/// Minimum depth (scene units) accepted by [`pinhole_normalize`].
pub const Z_MIN: f64 = 1e-9;

/// Below this angle the Rodrigues formula switches to its Taylor expansion.
const SMALL_ANGLE: f64 = 1e-8;

/// Antisymmetric matrix `[φ]×` such that `[φ]× v = φ × v`.
pub fn skew_symmetric(phi: &Vec3) -> Mat3 {
    Mat3::new(
        0.0, -phi.z, phi.y, //
        phi.z, 0.0, -phi.x, //
        -phi.y, phi.x, 0.0,
    )
}

/// A proper rotation matrix.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Rotation(Mat3);

impl Default for Rotation {
    fn default() -> Self {
        Self::identity()
    }
}

impl Rotation {
    pub fn identity() -> Self {
        Rotation(Mat3::identity())
    }

    /// Exponential map (Rodrigues formula).
    pub fn from_axis_angle(phi: &Vec3) -> Self {
        let theta2 = phi.norm_squared();
        let theta = theta2.sqrt();
        let k = skew_symmetric(phi);
        let (a, b) = if theta < SMALL_ANGLE {
            (1.0 - theta2 / 6.0, 0.5 - theta2 / 24.0)
        } else {
            (theta.sin() / theta, (1.0 - theta.cos()) / theta2)
        };
        Rotation(Mat3::identity() + k * a + k * k * b)
    }

    /// Wraps `m` after checking orthonormality and orientation to `tol`.
    pub fn from_matrix(m: Mat3, tol: f64) -> Result<Self> {
        let r = Rotation(m);
        if !r.is_valid(tol) {
            return Err(Error::InvalidInput(format!(
                "matrix is not a rotation within {tol:e}: {m}"
            )));
        }
        Ok(r)
    }

    /// Wraps `m` without any check. The caller guarantees `m ∈ SO(3)`.
    pub fn from_matrix_unchecked(m: Mat3) -> Self {
        Rotation(m)
    }

    /// Nearest rotation to `m` in the Frobenius sense.
    pub fn nearest(m: &Mat3) -> Self {
        let svd = SVD::new(*m, true, true);
        let u = svd.u.unwrap();
        let vt = svd.v_t.unwrap();
        let d = (u * vt).determinant().signum();
        let s = Mat3::from_diagonal(&Vec3::new(1.0, 1.0, d));
        Rotation(u * s * vt)
    }

    pub fn matrix(&self) -> &Mat3 {
        &self.0
    }

    pub fn inverse(&self) -> Self {
        Rotation(self.0.transpose())
    }

    pub fn apply(&self, v: &Vec3) -> Vec3 {
        self.0 * v
    }

    /// Orthonormality and unit determinant within `tol`.
    pub fn is_valid(&self, tol: f64) -> bool {
        let m = &self.0;
        m.iter().all(|x| x.is_finite())
            && (m.transpose() * m - Mat3::identity()).amax() <= tol
            && (m.determinant() - 1.0).abs() <= tol
    }

    /// Rotation angle in `[0, π]`.
    pub fn angle(&self) -> f64 {
        let m = &self.0;
        let s = 0.5 * Vec3::new(m[(2, 1)] - m[(1, 2)], m[(0, 2)] - m[(2, 0)], m[(1, 0)] - m[(0, 1)]).norm();
        let c = 0.5 * (m.trace() - 1.0);
        s.atan2(c)
    }

    /// Logarithm map, inverse of [`Rotation::from_axis_angle`].
    pub fn to_axis_angle(&self) -> Vec3 {
        let m = &self.0;
        let w = 0.5 * Vec3::new(m[(2, 1)] - m[(1, 2)], m[(0, 2)] - m[(2, 0)], m[(1, 0)] - m[(0, 1)]);
        let s = w.norm();
        let c = 0.5 * (m.trace() - 1.0);
        let theta = s.atan2(c);
        if theta < SMALL_ANGLE {
            return w * (1.0 + theta * theta / 6.0);
        }
        if s > 1e-6 {
            return w * (theta / s);
        }
        // Near π: axis from the symmetric part, sign from w.
        let b = (m + Mat3::identity()) * 0.5;
        let i = (0..3)
            .max_by(|&a, &b2| b[(a, a)].partial_cmp(&b[(b2, b2)]).unwrap())
            .unwrap();
        let mut axis: Vec3 = b.column(i).into();
        axis /= axis.norm();
        if axis.dot(&w) < 0.0 {
            axis = -axis;
        }
        axis * theta
    }
}

impl std::ops::Mul for Rotation {
    type Output = Rotation;
    fn mul(self, rhs: Rotation) -> Rotation {
        Rotation(self.0 * rhs.0)
    }
}

pub fn rotation_from_axis_angle(phi: &Vec3) -> Rotation {
    Rotation::from_axis_angle(phi)
}

/// Camera orientation and world position. `x = R (X - p)`.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct Pose {
    pub rotation: Rotation,
    pub position: Vec3,
}

impl Pose {
    pub fn new(rotation: Rotation, position: Vec3) -> Self {
        Pose { rotation, position }
    }

    pub fn world_to_camera(&self, x: &Vec3) -> Vec3 {
        self.rotation.apply(&(x - self.position))
    }

    pub fn camera_to_world(&self, x: &Vec3) -> Vec3 {
        self.rotation.inverse().apply(x) + self.position
    }

    /// Camera with optical axis through `target`, image y axis as close as
    /// possible to `down` (world direction).
    pub fn look_at(position: Vec3, target: Vec3, down: Vec3) -> Result<Self> {
        let z = target - position;
        let zn = z.norm();
        if zn == 0.0 {
            return Err(Error::DegenerateConfiguration("look_at target equals position".into()));
        }
        let z = z / zn;
        let x = down.cross(&z);
        let xn = x.norm();
        if xn < 1e-12 {
            return Err(Error::DegenerateConfiguration(
                "look_at direction parallel to down".into(),
            ));
        }
        let x = x / xn;
        let y = z.cross(&x);
        let m = Mat3::from_rows(&[x.transpose(), y.transpose(), z.transpose()]);
        Ok(Pose::new(Rotation(m), position))
    }
}

pub fn world_to_camera(pose: &Pose, x: &Vec3) -> Vec3 {
    pose.world_to_camera(x)
}

pub fn camera_to_world(pose: &Pose, x: &Vec3) -> Vec3 {
    pose.camera_to_world(x)
}

/// Zero-skew, unit-aspect camera intrinsics (pixels).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Intrinsics {
    pub f: f64,
    pub u0: f64,
    pub v0: f64,
}

impl Intrinsics {
    pub fn new(f: f64, u0: f64, v0: f64) -> Result<Self> {
        if !(f > 0.0 && f.is_finite() && u0.is_finite() && v0.is_finite()) {
            return Err(Error::InvalidInput(format!("invalid intrinsics f={f} u0={u0} v0={v0}")));
        }
        Ok(Intrinsics { f, u0, v0 })
    }

    pub fn matrix(&self) -> Mat3 {
        Mat3::new(self.f, 0.0, self.u0, 0.0, self.f, self.v0, 0.0, 0.0, 1.0)
    }

    pub fn apply(&self, c: f64, r: f64) -> Pixel {
        Pixel::new(self.f * c + self.u0, self.f * r + self.v0)
    }

    /// Inverse of [`Intrinsics::apply`].
    pub fn normalize(&self, px: &Pixel) -> (f64, f64) {
        ((px.x - self.u0) / self.f, (px.y - self.v0) / self.f)
    }
}

pub fn apply_intrinsics(k: &Intrinsics, c: f64, r: f64) -> Pixel {
    k.apply(c, r)
}

/// Normalized image coordinates `x' = x/z`, `y' = y/z`.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct NormalizedPoint {
    pub xp: f64,
    pub yp: f64,
}

impl NormalizedPoint {
    pub fn new(xp: f64, yp: f64) -> Self {
        NormalizedPoint { xp, yp }
    }
}

pub fn pinhole_normalize(x: &Vec3) -> Result<NormalizedPoint> {
    if !(x.z > Z_MIN) {
        return Err(Error::CheiralityViolation { depth: x.z });
    }
    Ok(NormalizedPoint::new(x.x / x.z, x.y / x.z))
}

/// `X ↦ s R X + t`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Similarity {
    pub scale: f64,
    pub rotation: Rotation,
    pub translation: Vec3,
}

impl Default for Similarity {
    fn default() -> Self {
        Self::identity()
    }
}

impl Similarity {
    pub fn identity() -> Self {
        Similarity {
            scale: 1.0,
            rotation: Rotation::identity(),
            translation: Vec3::zeros(),
        }
    }

    pub fn apply(&self, x: &Vec3) -> Vec3 {
        self.rotation.apply(x) * self.scale + self.translation
    }

    pub fn inverse(&self) -> Self {
        let rinv = self.rotation.inverse();
        Similarity {
            scale: 1.0 / self.scale,
            rotation: rinv,
            translation: -(rinv.apply(&self.translation)) / self.scale,
        }
    }

    /// Moves a camera along with the world: positions map through the
    /// similarity and orientations pick up `Rᵀ` on the right.
    pub fn apply_pose(&self, pose: &Pose) -> Pose {
        Pose::new(pose.rotation * self.rotation.inverse(), self.apply(&pose.position))
    }

    /// Sum of squared alignment residuals `Σ‖T(src) − dst‖²`.
    pub fn residual(&self, src: &[Vec3], dst: &[Vec3]) -> f64 {
        src.iter()
            .zip(dst)
            .map(|(s, d)| (self.apply(s) - d).norm_squared())
            .sum()
    }
}

/// Closed-form least-squares similarity taking `src` onto `dst` (centroid +
/// SVD method).
pub fn similarity_align(src: &[Vec3], dst: &[Vec3]) -> Result<Similarity> {
    if src.len() != dst.len() {
        return Err(Error::InvalidInput(format!(
            "similarity_align: {} source vs {} target points",
            src.len(),
            dst.len()
        )));
    }
    if src.len() < 3 {
        return Err(Error::DegenerateConfiguration(format!(
            "similarity_align needs at least 3 points, got {}",
            src.len()
        )));
    }
    let n = src.len() as f64;
    let mu_s = src.iter().sum::<Vec3>() / n;
    let mu_d = dst.iter().sum::<Vec3>() / n;

    let mut cov = Mat3::zeros();
    let mut src_scatter = Mat3::zeros();
    let mut var_s = 0.0;
    for (s, d) in src.iter().zip(dst) {
        let sc = s - mu_s;
        let dc = d - mu_d;
        cov += dc * sc.transpose();
        src_scatter += sc * sc.transpose();
        var_s += sc.norm_squared();
    }
    cov /= n;
    var_s /= n;

    let spread = src_scatter.symmetric_eigenvalues();
    let mut ev: Vec<f64> = spread.iter().copied().collect();
    ev.sort_by(|a, b| b.partial_cmp(a).unwrap());
    if !(ev[0] > 0.0) || ev[1] <= 1e-12 * ev[0] {
        return Err(Error::DegenerateConfiguration(
            "source points are collinear or coincident".into(),
        ));
    }

    let svd = SVD::new(cov, true, true);
    let u = svd.u.unwrap();
    let vt = svd.v_t.unwrap();
    let d = svd.singular_values;
    let sign = if (u.determinant() * vt.determinant()) < 0.0 {
        -1.0
    } else {
        1.0
    };
    let s_diag = Vec3::new(1.0, 1.0, sign);
    let rot = u * Mat3::from_diagonal(&s_diag) * vt;
    let scale = (d.component_mul(&s_diag)).sum() / var_s;
    let translation = mu_d - rot * mu_s * scale;
    Ok(Similarity {
        scale,
        rotation: Rotation::nearest(&rot),
        translation,
    })
}
