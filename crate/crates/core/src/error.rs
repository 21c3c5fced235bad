use thiserror::Error;

/// Errors produced anywhere in the toolkit.
#[derive(Debug, Error)]
pub enum Error {
    #[error("point is not in front of the camera (depth {depth:e})")]
    CheiralityViolation { depth: f64 },

    #[error("degenerate configuration: {0}")]
    DegenerateConfiguration(String),

    #[error("row equation did not converge after {iterations} iterations (residual {residual:e})")]
    NoConvergence { iterations: usize, residual: f64 },

    #[error("rolling-shutter row equation has no real root (discriminant {discriminant:e})")]
    NoRealRoot { discriminant: f64 },

    #[error("DIAC transfer is singular: (3,3) element is {0:e}")]
    SingularTransfer(f64),

    #[error("supplied unknowns do not solve the self-calibration equations (max residual {0:e})")]
    NotASolution(f64),

    #[error("numerical failure: {0}")]
    NumericalFailure(String),

    #[error("insufficient observations: {0}")]
    InsufficientObservations(String),

    #[error("insufficient coverage: camera {camera} retains {kept} observations, need at least {required}")]
    InsufficientCoverage {
        camera: usize,
        kept: usize,
        required: usize,
    },

    #[error("self-calibration is infeasible with m = {cameras} cameras: the counting condition requires m >= 3")]
    Infeasible { cameras: usize },

    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
