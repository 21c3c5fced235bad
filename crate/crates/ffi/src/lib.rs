//! C ABI over `rs_selfcal`.
//!
//! Every fallible call returns an [`RscStatus`]; on failure the message is
//! available from [`rsc_last_error`] on the same thread. Handles are opaque
//! and must be released with their `_free` function. Strings returned by the
//! library are released with [`rsc_string_free`].

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::ptr;

use rs_selfcal::bundle::{solve, AnchorParam, SolverOptions, Variant};
use rs_selfcal::geom::{Intrinsics, Mat3, Pose, Rotation, Vec3};
use rs_selfcal::io::{ReportFile, SceneFile, ROTATION_TOLERANCE};
use rs_selfcal::rs_models::{project_two_step, RsParams};
use rs_selfcal::selfcalib::{cms_check_trajectory, feasibility_count, NullityConfig, N_UNKNOWNS};
use rs_selfcal::Error;

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RscStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidInput = 2,
    Infeasible = 3,
    NumericalFailure = 4,
    Degenerate = 5,
    Cheirality = 6,
    NoRealRoot = 7,
    Io = 8,
    Panic = 9,
    Other = 99,
}

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RscVariant {
    NoRs = 0,
    TwoStep = 1,
    TwoStepAnchored = 2,
    LinearizedExact = 3,
}

impl From<RscVariant> for Variant {
    fn from(v: RscVariant) -> Self {
        match v {
            RscVariant::NoRs => Variant::NoRs,
            RscVariant::TwoStep => Variant::TwoStep,
            RscVariant::TwoStepAnchored => Variant::TwoStepAnchored,
            RscVariant::LinearizedExact => Variant::LinearizedExact,
        }
    }
}

/// Opaque scene handle.
pub struct RscScene {
    file: SceneFile,
}

/// Opaque solve-report handle.
pub struct RscReport {
    report: ReportFile,
}

thread_local! {
    static LAST_ERROR: RefCell<CString> = RefCell::new(CString::default());
}

fn set_last_error(msg: &str) {
    let c = CString::new(msg.replace('\0', " ")).unwrap_or_default();
    LAST_ERROR.with(|e| *e.borrow_mut() = c);
}

fn status_of(err: &Error) -> RscStatus {
    match err {
        Error::InvalidInput(_) | Error::Json(_) => RscStatus::InvalidInput,
        Error::Infeasible { .. } | Error::InsufficientCoverage { .. } | Error::InsufficientObservations(_) => {
            RscStatus::Infeasible
        }
        Error::NumericalFailure(_) | Error::NoConvergence { .. } => RscStatus::NumericalFailure,
        Error::DegenerateConfiguration(_) | Error::SingularTransfer(_) | Error::NotASolution(_) => {
            RscStatus::Degenerate
        }
        Error::CheiralityViolation { .. } => RscStatus::Cheirality,
        Error::NoRealRoot { .. } => RscStatus::NoRealRoot,
        Error::Io(_) => RscStatus::Io,
    }
}

/// Runs `f`, converting errors and panics into a status code.
fn guard<F>(f: F) -> RscStatus
where
    F: FnOnce() -> Result<(), RscFailure>,
{
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => {
            set_last_error("");
            RscStatus::Ok
        }
        Ok(Err(RscFailure(status, msg))) => {
            set_last_error(&msg);
            status
        }
        Err(_) => {
            set_last_error("panic inside rs_selfcal");
            RscStatus::Panic
        }
    }
}

struct RscFailure(RscStatus, String);

impl From<Error> for RscFailure {
    fn from(e: Error) -> Self {
        RscFailure(status_of(&e), e.to_string())
    }
}

fn null(what: &str) -> RscFailure {
    RscFailure(RscStatus::NullPointer, format!("{what} is null"))
}

unsafe fn read3(p: *const f64, what: &str) -> Result<[f64; 3], RscFailure> {
    if p.is_null() {
        return Err(null(what));
    }
    Ok([*p, *p.add(1), *p.add(2)])
}

/// Library version as a static NUL-terminated string.
#[no_mangle]
pub extern "C" fn rsc_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}

/// Message of the last failed call on this thread; empty after a success.
/// Valid until the next library call on the same thread.
#[no_mangle]
pub extern "C" fn rsc_last_error() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ptr())
}

/// Parses a scene JSON document.
///
/// # Safety
/// `json` must be a valid NUL-terminated string and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn rsc_scene_from_json(json: *const c_char, out: *mut *mut RscScene) -> RscStatus {
    guard(|| {
        if json.is_null() {
            return Err(null("json"));
        }
        if out.is_null() {
            return Err(null("out"));
        }
        *out = ptr::null_mut();
        let text = CStr::from_ptr(json)
            .to_str()
            .map_err(|e| RscFailure(RscStatus::InvalidInput, format!("json is not UTF-8: {e}")))?;
        let file: SceneFile = serde_json::from_str(text).map_err(Error::from)?;
        file.check_version()?;
        file.poses()?;
        *out = Box::into_raw(Box::new(RscScene { file }));
        Ok(())
    })
}

/// Releases a scene. Null is ignored.
///
/// # Safety
/// `scene` must come from [`rsc_scene_from_json`] and not be used afterwards.
#[no_mangle]
pub unsafe extern "C" fn rsc_scene_free(scene: *mut RscScene) {
    if !scene.is_null() {
        drop(Box::from_raw(scene));
    }
}

/// Number of cameras in the scene, 0 for null.
///
/// # Safety
/// `scene` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn rsc_scene_num_cameras(scene: *const RscScene) -> usize {
    scene.as_ref().map_or(0, |s| s.file.cameras.len())
}

/// Number of points in the scene, 0 for null.
///
/// # Safety
/// `scene` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn rsc_scene_num_points(scene: *const RscScene) -> usize {
    scene.as_ref().map_or(0, |s| s.file.points.len())
}

/// Critical-motion test on the scene's trajectory. `singular_values` may be
/// null; otherwise it must hold [`RSC_NUM_UNKNOWNS`] doubles.
///
/// # Safety
/// Pointers must be valid for writes; `scene` must be a live handle.
#[no_mangle]
pub unsafe extern "C" fn rsc_cms_check(
    scene: *const RscScene,
    threshold: f64,
    nullity: *mut usize,
    is_cms: *mut bool,
    singular_values: *mut f64,
) -> RscStatus {
    guard(|| {
        let s = scene.as_ref().ok_or_else(|| null("scene"))?;
        if nullity.is_null() || is_cms.is_null() {
            return Err(null("output"));
        }
        let cfg = NullityConfig {
            threshold,
            ..NullityConfig::default()
        };
        let report = cms_check_trajectory(&s.file.poses()?, &s.file.rs_params(), &cfg)?;
        *nullity = report.nullity;
        *is_cms = report.is_cms;
        if !singular_values.is_null() {
            for (i, v) in report.singular_values.iter().take(N_UNKNOWNS).enumerate() {
                *singular_values.add(i) = *v;
            }
        }
        Ok(())
    })
}

/// Number of unknowns of the self-calibration system.
pub const RSC_NUM_UNKNOWNS: usize = 8;
const _: () = assert!(RSC_NUM_UNKNOWNS == N_UNKNOWNS);

/// Bundle adjustment of a scene with observations. RS parameters start at
/// zero. `anchor_param` is 1 or 2 and only matters for the anchored variant.
///
/// # Safety
/// `scene` must be a live handle and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn rsc_solve(
    scene: *const RscScene,
    variant: RscVariant,
    anchor_cam: usize,
    anchor_param: u32,
    max_iters: usize,
    out: *mut *mut RscReport,
) -> RscStatus {
    guard(|| {
        let s = scene.as_ref().ok_or_else(|| null("scene"))?;
        if out.is_null() {
            return Err(null("out"));
        }
        *out = ptr::null_mut();
        let mut opts = SolverOptions::new(variant.into());
        opts.anchor_cam = anchor_cam;
        opts.anchor_param = match anchor_param {
            1 => AnchorParam::Phi1,
            2 => AnchorParam::Phi2,
            other => {
                return Err(RscFailure(
                    RscStatus::InvalidInput,
                    format!("anchor_param must be 1 or 2, got {other}"),
                ))
            }
        };
        opts.lm.max_iters = max_iters;
        let mut problem = s.file.problem()?;
        for c in &mut problem.cameras {
            c.rs = RsParams::zero();
        }
        let rep = solve(&problem, &opts)?;
        *out = Box::into_raw(Box::new(RscReport {
            report: ReportFile::from(&rep),
        }));
        Ok(())
    })
}

/// # Safety
/// `report` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn rsc_report_final_cost(report: *const RscReport) -> f64 {
    report.as_ref().map_or(f64::NAN, |r| r.report.final_cost)
}

/// # Safety
/// `report` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn rsc_report_initial_cost(report: *const RscReport) -> f64 {
    report.as_ref().map_or(f64::NAN, |r| r.report.initial_cost)
}

/// # Safety
/// `report` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn rsc_report_iterations(report: *const RscReport) -> usize {
    report.as_ref().map_or(0, |r| r.report.iterations)
}

/// # Safety
/// `report` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn rsc_report_converged(report: *const RscReport) -> bool {
    report.as_ref().is_some_and(|r| r.report.converged)
}

/// Full report as JSON; release with [`rsc_string_free`]. Null on failure.
///
/// # Safety
/// `report` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn rsc_report_to_json(report: *const RscReport) -> *mut c_char {
    let Some(r) = report.as_ref() else {
        set_last_error("report is null");
        return ptr::null_mut();
    };
    match serde_json::to_string(&r.report) {
        Ok(s) => CString::new(s).map_or(ptr::null_mut(), CString::into_raw),
        Err(e) => {
            set_last_error(&e.to_string());
            ptr::null_mut()
        }
    }
}

/// # Safety
/// `report` must come from [`rsc_solve`] and not be used afterwards.
#[no_mangle]
pub unsafe extern "C" fn rsc_report_free(report: *mut RscReport) {
    if !report.is_null() {
        drop(Box::from_raw(report));
    }
}

/// # Safety
/// `s` must come from this library and not be used afterwards.
#[no_mangle]
pub unsafe extern "C" fn rsc_string_free(s: *mut c_char) {
    if !s.is_null() {
        drop(CString::from_raw(s));
    }
}

/// Two-step RS projection of one world point to pixels.
/// `rotation` is 9 doubles row-major, `position`, `rs` and `point` 3 each,
/// `uv` receives 2.
///
/// # Safety
/// All pointers must be valid for the stated lengths.
#[no_mangle]
pub unsafe extern "C" fn rsc_project_two_step(
    rotation: *const f64,
    position: *const f64,
    rs: *const f64,
    f: f64,
    u0: f64,
    v0: f64,
    point: *const f64,
    uv: *mut f64,
) -> RscStatus {
    guard(|| {
        if rotation.is_null() {
            return Err(null("rotation"));
        }
        if uv.is_null() {
            return Err(null("uv"));
        }
        let m = Mat3::from_row_slice(std::slice::from_raw_parts(rotation, 9));
        let pose = Pose::new(
            Rotation::from_matrix(m, ROTATION_TOLERANCE)?,
            Vec3::from(read3(position, "position")?),
        );
        let params = RsParams::from_array(read3(rs, "rs")?);
        let k = Intrinsics::new(f, u0, v0)?;
        let px = project_two_step(&pose, &params, &k, &Vec3::from(read3(point, "point")?))?;
        *uv = px.x;
        *uv.add(1) = px.y;
        Ok(())
    })
}

/// Whether `m` views with `n_k` known and `n_f` fixed intrinsics give at
/// least as many equations as unknowns.
#[no_mangle]
pub extern "C" fn rsc_feasibility_count(m: usize, n_k: usize, n_f: usize) -> bool {
    feasibility_count(m, n_k, n_f)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn status_mapping() {
        assert_eq!(status_of(&Error::Infeasible { cameras: 2 }), RscStatus::Infeasible);
        assert_eq!(
            status_of(&Error::CheiralityViolation { depth: -1.0 }),
            RscStatus::Cheirality
        );
    }

    #[test]
    fn panic_is_contained() {
        let s = guard(|| panic!("boom"));
        assert_eq!(s, RscStatus::Panic);
    }
}
