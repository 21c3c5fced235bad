use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geom::{pinhole_normalize, Intrinsics, Pose, Rotation, Vec3};

/// Fraction of the image kept clear of points at construction time, so that
/// RS distortion rarely pushes a point out of frame.
const IMAGE_MARGIN: f64 = 0.1;
const ORBIT_RADIUS: f64 = 10.0;

#[derive(Debug, Clone, PartialEq)]
pub struct Scene {
    pub points: Vec<Vec3>,
    pub trajectory: Vec<Pose>,
    pub intrinsics: Intrinsics,
    pub width: u32,
    pub height: u32,
}

impl Scene {
    /// Normalized row span of the image.
    pub fn row_extent(&self) -> f64 {
        self.height as f64 / self.intrinsics.f
    }

    /// Mean distance between consecutive camera positions.
    pub fn mean_step(&self) -> f64 {
        let t = &self.trajectory;
        if t.len() < 2 {
            return 0.0;
        }
        t.windows(2)
            .map(|w| (w[1].position - w[0].position).norm())
            .sum::<f64>()
            / (t.len() - 1) as f64
    }

    /// Largest distance between two scene points.
    pub fn diameter(&self) -> f64 {
        let mut d: f64 = 0.0;
        for (i, a) in self.points.iter().enumerate() {
            for b in &self.points[i + 1..] {
                d = d.max((a - b).norm());
            }
        }
        d
    }

    pub fn in_image(&self, u: f64, v: f64, margin: f64) -> bool {
        let (w, h) = (self.width as f64, self.height as f64);
        u >= margin * w && u < (1.0 - margin) * w && v >= margin * h && v < (1.0 - margin) * h
    }

    fn pinhole_visible(&self, pose: &Pose, x: &Vec3, margin: f64) -> bool {
        match pinhole_normalize(&pose.world_to_camera(x)) {
            Ok(n) => {
                let px = self.intrinsics.apply(n.xp, n.yp);
                self.in_image(px.x, px.y, margin)
            }
            Err(_) => false,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.trajectory.len() < 3 {
            return Err(Error::InvalidInput(format!(
                "scene needs at least 3 cameras, got {}",
                self.trajectory.len()
            )));
        }
        if self.points.len() < 8 {
            return Err(Error::InvalidInput(format!(
                "scene needs at least 8 points, got {}",
                self.points.len()
            )));
        }
        for (j, x) in self.points.iter().enumerate() {
            let views = self
                .trajectory
                .iter()
                .filter(|p| self.pinhole_visible(p, x, 0.0))
                .count();
            if views < 2 {
                return Err(Error::InvalidInput(format!(
                    "point {j} is visible in {views} view(s), need 2"
                )));
            }
        }
        Ok(())
    }
}

/// Built-in procedural scenes: a facade-like slab of points seen from an arc.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ScenePreset {
    /// Varied elevations and camera roll; far from any critical motion.
    Generic,
    /// Small, constant elevation: readout axes nearly parallel.
    LowElevation,
    /// Horizontal optical axes at varying heights: readout axes exactly parallel.
    YShared,
}

impl ScenePreset {
    pub const ALL: [ScenePreset; 3] = [ScenePreset::Generic, ScenePreset::LowElevation, ScenePreset::YShared];

    pub fn name(&self) -> &'static str {
        match self {
            ScenePreset::Generic => "generic",
            ScenePreset::LowElevation => "low-elevation",
            ScenePreset::YShared => "y-shared",
        }
    }
}

impl std::fmt::Display for ScenePreset {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

impl std::str::FromStr for ScenePreset {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        ScenePreset::ALL.into_iter().find(|p| p.name() == s).ok_or_else(|| {
            Error::InvalidInput(format!(
                "unknown scene preset '{s}' (expected generic, low-elevation or y-shared)"
            ))
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SceneSpec {
    pub preset: ScenePreset,
    pub n_cameras: usize,
    pub n_points: usize,
    /// Camera elevation in radians (low-elevation preset only).
    pub elevation: f64,
    pub seed: u64,
}

impl SceneSpec {
    pub fn new(preset: ScenePreset, seed: u64) -> Self {
        SceneSpec {
            preset,
            n_cameras: 10,
            n_points: 200,
            elevation: 5f64.to_radians(),
            seed,
        }
    }

    pub fn build(&self) -> Result<Scene> {
        build_scene(self)
    }
}

pub fn default_intrinsics() -> Intrinsics {
    Intrinsics {
        f: 1000.0,
        u0: 512.0,
        v0: 384.0,
    }
}

fn build_scene(spec: &SceneSpec) -> Result<Scene> {
    if spec.n_cameras < 3 || spec.n_points < 8 {
        return Err(Error::InvalidInput(format!(
            "scene needs at least 3 cameras and 8 points, got {} and {}",
            spec.n_cameras, spec.n_points
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let down = Vec3::new(0.0, 1.0, 0.0);
    let m = spec.n_cameras;
    let span = 35f64.to_radians();
    let mut trajectory = Vec::with_capacity(m);
    for i in 0..m {
        let t = i as f64 / (m - 1) as f64;
        let pose = match spec.preset {
            ScenePreset::Generic => {
                let az = rng.gen_range(-45f64..45.0).to_radians();
                let el = rng.gen_range(10f64..35.0).to_radians();
                let pos = orbit(az, el);
                let target = Vec3::new(rng.gen_range(-0.5..0.5), rng.gen_range(-0.5..0.5), 0.0);
                let base = Pose::look_at(pos, target, down)?;
                let roll = rng.gen_range(-15f64..15.0).to_radians();
                Pose::new(
                    Rotation::from_axis_angle(&Vec3::new(0.0, 0.0, roll)) * base.rotation,
                    pos,
                )
            }
            ScenePreset::LowElevation => {
                let az = -span + 2.0 * span * t;
                Pose::look_at(orbit(az, spec.elevation), Vec3::zeros(), down)?
            }
            ScenePreset::YShared => {
                let az = -span + 2.0 * span * t;
                let mut pos = orbit(az, 0.0);
                pos.y = rng.gen_range(-0.5..0.5);
                Pose::look_at(pos, Vec3::new(0.0, pos.y, 0.0), down)?
            }
        };
        trajectory.push(pose);
    }

    let mut scene = Scene {
        points: Vec::with_capacity(spec.n_points),
        trajectory,
        intrinsics: default_intrinsics(),
        width: 1024,
        height: 768,
    };
    let mut attempts = 0usize;
    while scene.points.len() < spec.n_points {
        attempts += 1;
        if attempts > 1000 * spec.n_points {
            return Err(Error::DegenerateConfiguration(
                "could not place points visible in every view".into(),
            ));
        }
        let x = Vec3::new(
            rng.gen_range(-3.5..3.5),
            rng.gen_range(-2.5..2.5),
            rng.gen_range(-1.0..1.0),
        );
        if scene
            .trajectory
            .iter()
            .all(|p| scene.pinhole_visible(p, &x, IMAGE_MARGIN))
        {
            scene.points.push(x);
        }
    }
    scene.validate()?;
    Ok(scene)
}

/// Camera centre on a sphere around the origin; negative Y is up.
fn orbit(azimuth: f64, elevation: f64) -> Vec3 {
    Vec3::new(
        ORBIT_RADIUS * elevation.cos() * azimuth.sin(),
        -ORBIT_RADIUS * elevation.sin(),
        -ORBIT_RADIUS * elevation.cos() * azimuth.cos(),
    )
}

/// Uniformly distributed unit vector.
pub(crate) fn random_unit_vector<R: Rng + ?Sized>(rng: &mut R) -> Vec3 {
    loop {
        let v = Vec3::new(
            StandardNormal.sample(rng),
            StandardNormal.sample(rng),
            StandardNormal.sample(rng),
        );
        let n = v.norm();
        if n > 1e-12 {
            return v / n;
        }
    }
}
