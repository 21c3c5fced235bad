//! Self-calibration of the imaginary camera and numerical detection of
//! critical motion sequences.
//!
//! A projective reconstruction `Pⁱ = [Aⁱ | aⁱ]` with `P¹ = [I | 0]` is upgraded
//! to metric by the DIAC `ω*¹` of the first camera and the plane-at-infinity
//! vector `p`. Each camera's DIAC follows from
//! `ω*ⁱ = (Aⁱ − aⁱpᵀ) ω*¹ (Aⁱ − aⁱpᵀ)ᵀ` and must have the form produced by
//! an imaginary camera with known `f` and unknown skew and aspect:
//! `ω₁₁ω₂₂ = ω₂₂f² + ω₁₂²` and `ω₁₃ = ω₂₃ = 0`.
//!
//! A motion is critical when the stacked equations lose rank at the true
//! solution. [`cms_nullity`] reports that rank loss from the SVD of the
//! finite-difference Jacobian.

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geom::{Mat3, Pose, Vec3};
use crate::rs_models::{ImaginaryIntrinsics, RsParams};

/// Number of unknowns: five free entries of `ω*¹` plus `p`.
pub const N_UNKNOWNS: usize = 8;

/// Projection matrix `P = [A | a]`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ProjectiveCamera {
    pub a: Mat3,
    pub t: Vec3,
}

impl ProjectiveCamera {
    pub fn new(a: Mat3, t: Vec3) -> Self {
        ProjectiveCamera { a, t }
    }

    pub fn canonical() -> Self {
        ProjectiveCamera::new(Mat3::identity(), Vec3::zeros())
    }
}

/// Dual image of the absolute conic, normalized so `ω₃₃ = 1`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Diac(Mat3);

impl Diac {
    /// Symmetrizes and rescales `m` to `ω₃₃ = 1`.
    pub fn new(m: Mat3) -> Result<Self> {
        let w33 = m[(2, 2)];
        if w33.abs() < 1e-14 {
            return Err(Error::SingularTransfer(w33));
        }
        let s = (m + m.transpose()) * (0.5 / w33);
        Ok(Diac(s))
    }

    pub fn matrix(&self) -> &Mat3 {
        &self.0
    }

    /// The five free entries `(ω₁₁, ω₁₂, ω₂₂, ω₁₃, ω₂₃)`.
    pub fn free_entries(&self) -> [f64; 5] {
        let m = &self.0;
        [m[(0, 0)], m[(0, 1)], m[(1, 1)], m[(0, 2)], m[(1, 2)]]
    }

    pub fn from_free_entries(e: &[f64]) -> Self {
        Diac(Mat3::new(
            e[0], e[1], e[3], //
            e[1], e[2], e[4], //
            e[3], e[4], 1.0,
        ))
    }
}

/// Unknowns of the self-calibration system.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CalibUnknowns {
    pub omega1: Diac,
    pub p_inf: Vec3,
}

impl CalibUnknowns {
    pub fn to_vector(&self) -> [f64; N_UNKNOWNS] {
        let e = self.omega1.free_entries();
        [e[0], e[1], e[2], e[3], e[4], self.p_inf.x, self.p_inf.y, self.p_inf.z]
    }

    pub fn from_vector(v: &[f64]) -> Self {
        CalibUnknowns {
            omega1: Diac::from_free_entries(&v[..5]),
            p_inf: Vec3::new(v[5], v[6], v[7]),
        }
    }
}

/// Numerics of the rank test.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NullityConfig {
    /// Relative central-difference step.
    pub fd_step: f64,
    /// Singular values below `threshold · σ_max` count as zero.
    pub threshold: f64,
    /// Largest residual accepted at the supplied solution.
    pub solution_tolerance: f64,
}

impl Default for NullityConfig {
    fn default() -> Self {
        NullityConfig {
            fd_step: 1e-6,
            threshold: 1e-7,
            solution_tolerance: 1e-8,
        }
    }
}

/// Outcome of the rank test.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NullityReport {
    /// All `N_UNKNOWNS` singular values, descending; zero-padded when there
    /// are fewer equations than unknowns.
    pub singular_values: Vec<f64>,
    pub nullity: usize,
    pub threshold: f64,
    pub is_cms: bool,
}

impl NullityReport {
    pub fn from_singular_values(mut singular_values: Vec<f64>, threshold: f64) -> Self {
        singular_values.sort_by(|a, b| b.partial_cmp(a).unwrap());
        singular_values.resize(N_UNKNOWNS.max(singular_values.len()), 0.0);
        let smax = singular_values[0];
        let nullity = if smax > 0.0 {
            singular_values.iter().filter(|&&s| s < threshold * smax).count()
        } else {
            singular_values.len()
        };
        NullityReport {
            singular_values,
            nullity,
            threshold,
            is_cms: nullity >= 1,
        }
    }
}

/// `ω* = K Kᵀ` for the imaginary camera.
#[allow(non_snake_case)]
pub fn diac_from_imaginary_K(k: &ImaginaryIntrinsics) -> Diac {
    let m = k.matrix();
    Diac(m * m.transpose())
}

/// Residuals `(ω₁₁ω₂₂ − ω₂₂f² − ω₁₂², ω₁₃, ω₂₃)`.
pub fn constraint_residuals(omega: &Diac, f: f64) -> [f64; 3] {
    let w = omega.matrix();
    [
        w[(0, 0)] * w[(1, 1)] - w[(1, 1)] * f * f - w[(0, 1)] * w[(0, 1)],
        w[(0, 2)],
        w[(1, 2)],
    ]
}

/// `ω*ⁱ = (Aⁱ − aⁱpᵀ) ω*¹ (Aⁱ − aⁱpᵀ)ᵀ`, renormalized to `ω₃₃ = 1`.
pub fn transfer_diac(cam: &ProjectiveCamera, unknowns: &CalibUnknowns) -> Result<Diac> {
    let b = cam.a - cam.t * unknowns.p_inf.transpose();
    Diac::new(b * unknowns.omega1.matrix() * b.transpose())
}

fn stacked_residuals(cams: &[ProjectiveCamera], x: &[f64], f_list: &[f64]) -> Result<Vec<f64>> {
    let unknowns = CalibUnknowns::from_vector(x);
    let mut out = Vec::with_capacity(3 * cams.len());
    for (cam, &f) in cams.iter().zip(f_list) {
        out.extend(constraint_residuals(&transfer_diac(cam, &unknowns)?, f));
    }
    Ok(out)
}

fn check_lengths(cams: &[ProjectiveCamera], f_list: &[f64]) -> Result<()> {
    if cams.is_empty() || cams.len() != f_list.len() {
        return Err(Error::InvalidInput(format!(
            "{} cameras but {} focal lengths",
            cams.len(),
            f_list.len()
        )));
    }
    Ok(())
}

/// Max-abs residual of the stacked system at `unknowns`.
pub fn max_residual(cams: &[ProjectiveCamera], unknowns: &CalibUnknowns, f_list: &[f64]) -> Result<f64> {
    check_lengths(cams, f_list)?;
    let r = stacked_residuals(cams, &unknowns.to_vector(), f_list)?;
    Ok(r.iter().fold(0.0f64, |m, x| m.max(x.abs())))
}

/// Jacobian (3m × 8) of the stacked residuals by central differences.
pub fn build_constraint_jacobian(
    cams: &[ProjectiveCamera],
    unknowns: &CalibUnknowns,
    f_list: &[f64],
    fd_step: f64,
) -> Result<DMatrix<f64>> {
    check_lengths(cams, f_list)?;
    let x0 = unknowns.to_vector();
    let mut jac = DMatrix::zeros(3 * cams.len(), N_UNKNOWNS);
    for k in 0..N_UNKNOWNS {
        let h = fd_step * x0[k].abs().max(1.0);
        let mut xp = x0;
        let mut xm = x0;
        xp[k] += h;
        xm[k] -= h;
        let rp = stacked_residuals(cams, &xp, f_list)?;
        let rm = stacked_residuals(cams, &xm, f_list)?;
        for (row, (a, b)) in rp.iter().zip(&rm).enumerate() {
            jac[(row, k)] = (a - b) / (2.0 * h);
        }
    }
    Ok(jac)
}

/// Rank test of the self-calibration equations at a known solution.
pub fn cms_nullity(
    cams: &[ProjectiveCamera],
    unknowns_at_truth: &CalibUnknowns,
    f_list: &[f64],
    cfg: &NullityConfig,
) -> Result<NullityReport> {
    let res = max_residual(cams, unknowns_at_truth, f_list)?;
    if !(res <= cfg.solution_tolerance) {
        return Err(Error::NotASolution(res));
    }
    let jac = build_constraint_jacobian(cams, unknowns_at_truth, f_list, cfg.fd_step)?;
    let sv = jac.svd(false, false).singular_values;
    Ok(NullityReport::from_singular_values(
        sv.iter().copied().collect(),
        cfg.threshold,
    ))
}

/// Projective cameras `[Aⁱ | aⁱ]` of a metric configuration, normalized so the
/// first camera is `[I | 0]` and distorted by the projective frame change
/// whose plane-at-infinity vector is `p_inf`.
///
/// Translations are rescaled so their RMS over cameras 2..m is one; this
/// only picks a projective frame and leaves the rank of the system intact.
pub fn projective_cameras_from_metric(
    poses: &[Pose],
    intrinsics: &[ImaginaryIntrinsics],
    p_inf: &Vec3,
) -> Result<Vec<ProjectiveCamera>> {
    if poses.is_empty() || poses.len() != intrinsics.len() {
        return Err(Error::InvalidInput(
            "poses and intrinsics must be non-empty and equal in length".into(),
        ));
    }
    let m1 = intrinsics[0].matrix() * poses[0].rotation.matrix();
    let m1_inv = m1
        .try_inverse()
        .ok_or_else(|| Error::DegenerateConfiguration("first camera matrix is singular".into()))?;
    let mut cams: Vec<ProjectiveCamera> = poses
        .iter()
        .zip(intrinsics)
        .map(|(pose, k)| {
            let mi = k.matrix() * pose.rotation.matrix();
            ProjectiveCamera::new(mi * m1_inv, mi * (poses[0].position - pose.position))
        })
        .collect();
    let n = cams.len().saturating_sub(1);
    if n > 0 {
        let rms = (cams[1..].iter().map(|c| c.t.norm_squared()).sum::<f64>() / n as f64).sqrt();
        if rms > 0.0 {
            for c in &mut cams {
                c.t /= rms;
            }
        }
    }
    for c in &mut cams {
        c.a += c.t * p_inf.transpose();
    }
    Ok(cams)
}

/// Rank test for a metric camera trajectory whose imaginary cameras follow
/// from the two-step parameters in normalized units (`f = 1`).
pub fn cms_check_trajectory(poses: &[Pose], rs: &[RsParams], cfg: &NullityConfig) -> Result<NullityReport> {
    if poses.len() != rs.len() {
        return Err(Error::InvalidInput(
            "one set of RS parameters per camera is required".into(),
        ));
    }
    let ks = rs
        .iter()
        .map(|p| ImaginaryIntrinsics::from_params(1.0, p))
        .collect::<Result<Vec<_>>>()?;
    let cams = projective_cameras_from_metric(poses, &ks, &Vec3::zeros())?;
    let truth = CalibUnknowns {
        omega1: diac_from_imaginary_K(&ks[0]),
        p_inf: Vec3::zeros(),
    };
    let f_list = vec![1.0; poses.len()];
    cms_nullity(&cams, &truth, &f_list, cfg)
}

/// A camera in the form `K (R_y(yaw) X + t)` with the imaginary `K`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SharedAxisCamera {
    pub f: f64,
    pub yaw: f64,
    pub t: Vec3,
    pub s: f64,
    pub alpha: f64,
}

impl SharedAxisCamera {
    /// Image coordinates of `x` (principal point at the origin).
    pub fn project(&self, x: &Vec3) -> (f64, f64) {
        let (sn, cs) = self.yaw.sin_cos();
        let xc = x.x * cs + x.z * sn + self.t.x;
        let yc = x.y + self.t.y;
        let zc = -x.x * sn + x.z * cs + self.t.z;
        let u = self.f * xc + self.f * self.s * yc;
        let v = self.f * self.alpha * yc;
        (u / zc, v / zc)
    }
}

/// The one-parameter family of equivalent configurations for cameras sharing
/// their y axis: `Y ← kY`, `t_Y ← k t_Y`, `s ← s/k`, `α ← α/k`.
pub fn prop3_gauge_transform(points: &[Vec3], cams: &[SharedAxisCamera], k: f64) -> (Vec<Vec3>, Vec<SharedAxisCamera>) {
    assert!(k > 0.0, "gauge scale must be positive, got {k}");
    let points = points.iter().map(|x| Vec3::new(x.x, k * x.y, x.z)).collect();
    let cams = cams
        .iter()
        .map(|c| SharedAxisCamera {
            t: Vec3::new(c.t.x, k * c.t.y, c.t.z),
            s: c.s / k,
            alpha: c.alpha / k,
            ..*c
        })
        .collect();
    (points, cams)
}

/// Counting condition `m·n_k + (m − 1)·n_f ≥ 8`.
pub fn feasibility_count(m: usize, n_k: usize, n_f: usize) -> bool {
    m * n_k + m.saturating_sub(1) * n_f >= 8
}
