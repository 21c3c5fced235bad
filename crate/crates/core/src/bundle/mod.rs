//! Bundle adjustment under pinhole and rolling-shutter camera models.

mod model;
mod solver;

pub use model::{
    project, project_with_jacobian, retract_camera, CameraJacobian, CameraState, PointJacobian, Variant, CAM_DOF,
};
pub use solver::{
    apply_gauge_fix, jacobian, residual, solve, AnchorParam, Gauge, IterationRecord, LmOptions, Observation,
    ObservationJacobian, ParameterMask, Problem, RobustLoss, SolveReport, SolverOptions, Termination, INVALID_RESIDUAL,
    MIN_CAMERAS_PER_POINT, MIN_OBS_PER_CAMERA,
};
