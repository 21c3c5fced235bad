//! JSON scene and report files and the run manifest.

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::bundle::{CameraState, IterationRecord, Observation, Problem, SolveReport, Termination, Variant};
use crate::error::{Error, Result};
use crate::geom::{Intrinsics, Mat3, Pose, Rotation, Vec3};
use crate::rs_models::{RsMotion, RsParams};
use crate::synth::Scene;

pub const FORMAT_VERSION: u32 = 1;
/// Orthonormality tolerance for rotation blocks read from disk.
pub const ROTATION_TOLERANCE: f64 = 1e-6;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct IntrinsicsFile {
    pub f: f64,
    pub u0: f64,
    pub v0: f64,
    pub width: u32,
    pub height: u32,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CameraFile {
    /// Row-major world-to-camera rotation.
    #[serde(rename = "R")]
    pub r: [f64; 9],
    pub p: [f64; 3],
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub rs: Option<[f64; 3]>,
    /// Intra-frame translation rate, kept for ground-truth files.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub v: Option<[f64; 3]>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ObservationFile {
    pub cam: usize,
    pub pt: usize,
    pub u: f64,
    pub v: f64,
    #[serde(default, skip_serializing_if = "is_unit")]
    pub weight: Option<f64>,
}

fn is_unit(w: &Option<f64>) -> bool {
    matches!(w, None | Some(1.0))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SceneFile {
    pub format_version: u32,
    pub intrinsics: IntrinsicsFile,
    pub cameras: Vec<CameraFile>,
    pub points: Vec<[f64; 3]>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub observations: Option<Vec<ObservationFile>>,
}

impl CameraFile {
    pub fn from_pose(pose: &Pose, rs: Option<RsParams>, v: Option<Vec3>) -> Self {
        let m = pose.rotation.matrix();
        let mut r = [0.0; 9];
        for i in 0..3 {
            for j in 0..3 {
                r[3 * i + j] = m[(i, j)];
            }
        }
        CameraFile {
            r,
            p: pose.position.into(),
            rs: rs.map(|p| p.as_array()),
            v: v.map(Into::into),
        }
    }

    pub fn pose(&self) -> Result<Pose> {
        let m = Mat3::from_row_slice(&self.r);
        let rotation = Rotation::from_matrix(m, ROTATION_TOLERANCE)?;
        Ok(Pose::new(rotation, Vec3::from(self.p)))
    }

    pub fn rs_params(&self) -> RsParams {
        self.rs.map(RsParams::from_array).unwrap_or_default()
    }

    pub fn motion(&self) -> RsMotion {
        RsMotion::new(self.rs_params().as_vec3(), self.v.map(Vec3::from).unwrap_or_default())
    }
}

impl SceneFile {
    pub fn from_scene(scene: &Scene, motions: Option<&[RsMotion]>, observations: Option<&[Observation]>) -> Self {
        let k = scene.intrinsics;
        let cameras = scene
            .trajectory
            .iter()
            .enumerate()
            .map(|(i, p)| {
                let m = motions.map(|m| m[i]);
                CameraFile::from_pose(p, m.map(|m| m.params()), m.map(|m| m.v))
            })
            .collect();
        SceneFile {
            format_version: FORMAT_VERSION,
            intrinsics: IntrinsicsFile {
                f: k.f,
                u0: k.u0,
                v0: k.v0,
                width: scene.width,
                height: scene.height,
            },
            cameras,
            points: scene.points.iter().map(|x| (*x).into()).collect(),
            observations: observations.map(|o| o.iter().map(ObservationFile::from).collect()),
        }
    }

    /// Scene file describing an adjusted problem.
    pub fn from_cameras(
        cameras: &[CameraState],
        points: &[Vec3],
        observations: Option<&[Observation]>,
        width: u32,
        height: u32,
    ) -> Self {
        let k = cameras.first().map(|c| c.intrinsics).unwrap_or(Intrinsics {
            f: 1.0,
            u0: 0.0,
            v0: 0.0,
        });
        SceneFile {
            format_version: FORMAT_VERSION,
            intrinsics: IntrinsicsFile {
                f: k.f,
                u0: k.u0,
                v0: k.v0,
                width,
                height,
            },
            cameras: cameras
                .iter()
                .map(|c| CameraFile::from_pose(&c.pose, Some(c.rs), None))
                .collect(),
            points: points.iter().map(|x| (*x).into()).collect(),
            observations: observations.map(|o| o.iter().map(ObservationFile::from).collect()),
        }
    }

    pub fn check_version(&self) -> Result<()> {
        if self.format_version != FORMAT_VERSION {
            return Err(Error::InvalidInput(format!(
                "unsupported format_version {} (expected {FORMAT_VERSION})",
                self.format_version
            )));
        }
        Ok(())
    }

    pub fn intrinsics(&self) -> Result<Intrinsics> {
        let k = &self.intrinsics;
        Intrinsics::new(k.f, k.u0, k.v0)
    }

    pub fn poses(&self) -> Result<Vec<Pose>> {
        self.cameras.iter().map(CameraFile::pose).collect()
    }

    pub fn rs_params(&self) -> Vec<RsParams> {
        self.cameras.iter().map(CameraFile::rs_params).collect()
    }

    pub fn motions(&self) -> Vec<RsMotion> {
        self.cameras.iter().map(CameraFile::motion).collect()
    }

    pub fn scene(&self) -> Result<Scene> {
        self.check_version()?;
        Ok(Scene {
            points: self.points.iter().map(|p| Vec3::from(*p)).collect(),
            trajectory: self.poses()?,
            intrinsics: self.intrinsics()?,
            width: self.intrinsics.width,
            height: self.intrinsics.height,
        })
    }

    /// Bundle-adjustment problem. RS parameters start from the file values,
    /// or zero when absent.
    pub fn problem(&self) -> Result<Problem> {
        self.check_version()?;
        let k = self.intrinsics()?;
        let cameras = self
            .cameras
            .iter()
            .map(|c| Ok(CameraState::new(c.pose()?, c.rs_params(), k)))
            .collect::<Result<Vec<_>>>()?;
        let observations = self
            .observations
            .as_ref()
            .ok_or_else(|| Error::InvalidInput("scene file has no observations".into()))?
            .iter()
            .map(|o| Observation {
                cam_id: o.cam,
                pt_id: o.pt,
                u: o.u,
                v: o.v,
                weight: o.weight.unwrap_or(1.0),
            })
            .collect();
        let problem = Problem::new(
            cameras,
            self.points.iter().map(|p| Vec3::from(*p)).collect(),
            observations,
        );
        problem.validate()?;
        Ok(problem)
    }
}

impl From<&Observation> for ObservationFile {
    fn from(o: &Observation) -> Self {
        ObservationFile {
            cam: o.cam_id,
            pt: o.pt_id,
            u: o.u,
            v: o.v,
            weight: Some(o.weight),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReportFile {
    pub format_version: u32,
    pub variant: Variant,
    pub initial_cost: f64,
    pub final_cost: f64,
    pub iterations: usize,
    pub termination: Termination,
    pub converged: bool,
    pub invalid_observations: usize,
    pub cameras: Vec<CameraFile>,
    pub points: Vec<[f64; 3]>,
    pub history: Vec<IterationRecord>,
}

impl From<&SolveReport> for ReportFile {
    fn from(r: &SolveReport) -> Self {
        ReportFile {
            format_version: FORMAT_VERSION,
            variant: r.variant,
            initial_cost: r.initial_cost,
            final_cost: r.final_cost,
            iterations: r.iterations,
            termination: r.termination,
            converged: r.converged(),
            invalid_observations: r.invalid_observations,
            cameras: r
                .cameras
                .iter()
                .map(|c| CameraFile::from_pose(&c.pose, Some(c.rs), None))
                .collect(),
            points: r.points.iter().map(|x| (*x).into()).collect(),
            history: r.history.clone(),
        }
    }
}

/// Everything needed to rerun a command.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub tool: String,
    pub version: String,
    pub command: String,
    pub seed: Option<u64>,
    pub config: serde_json::Value,
}

impl RunManifest {
    pub fn new<T: Serialize>(command: &str, seed: Option<u64>, config: &T) -> Result<Self> {
        Ok(RunManifest {
            tool: env!("CARGO_PKG_NAME").to_string(),
            version: env!("CARGO_PKG_VERSION").to_string(),
            command: command.to_string(),
            seed,
            config: serde_json::to_value(config)?,
        })
    }
}

pub fn read_json<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<T> {
    let text = fs::read_to_string(path)?;
    Ok(serde_json::from_str(&text)?)
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    fs::write(path, text)?;
    Ok(())
}

pub fn load_scene_file(path: &Path) -> Result<SceneFile> {
    let f: SceneFile = read_json(path)?;
    f.check_version()?;
    f.poses()?;
    Ok(f)
}
