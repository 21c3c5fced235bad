//! Rolling-shutter structure from motion recast as self-calibration of an
//! imaginary camera.
//!
//! * [`geom`]: rotations, poses, intrinsics, similarity alignment.
//! * [`rs_models`]: exact, linearized and two-step rolling-shutter projections.
//! * [`selfcalib`]: self-calibration equations and critical-motion detection.
//! * [`bundle`]: Levenberg–Marquardt bundle adjustment with the four model variants.
//! * [`synth`]: synthetic scenes, trial runner and error metrics.
//! * [`io`] and [`cli`]: file formats and the command-line front end.

// `!(x > t)` checks are written that way to reject NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod bundle;
pub mod cli;
pub mod error;
pub mod geom;
pub mod io;
pub mod rs_models;
pub mod selfcalib;
pub mod synth;

pub use error::{Error, Result};
