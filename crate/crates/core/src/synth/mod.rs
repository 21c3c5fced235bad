//! Synthetic scenes, RS motion and observation generation, error metrics
//! and the seeded multi-trial experiment runner.

mod experiment;
mod generate;
mod metrics;
mod scene;

use serde::{Deserialize, Serialize};

use crate::bundle::{AnchorParam, LmOptions};
use crate::error::{Error, Result};

pub use experiment::{
    median, run_experiment, run_experiment_with_motions, ExperimentResult, Histogram, InitMode, TrialRow,
    HISTOGRAM_BINS, METRIC_NAMES,
};
pub use generate::{generate_motions, generate_rs_motion, motion_params, synthesize_observations, ObservationModel};
pub use metrics::{evaluate, rotation_error, structure_error, translation_error, Metrics};
pub use scene::{default_intrinsics, Scene, ScenePreset, SceneSpec};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrialConfig {
    /// Std. dev. of the intra-frame rotation angle over the image (rad).
    pub sigma_rot: f64,
    /// Std. dev. of the intra-frame translation relative to the mean camera step.
    pub sigma_trans: f64,
    /// Std. dev. of the pixel noise.
    pub pixel_noise_sigma: f64,
    pub n_trials: usize,
    pub seed: u64,
    pub first_image_clean: bool,
    pub observation_model: ObservationModel,
    pub init: InitMode,
    pub init_sigma_rot: f64,
    pub init_sigma_pos: f64,
    pub init_sigma_point: f64,
    pub anchor_cam: usize,
    pub anchor_param: AnchorParam,
    pub lm: LmOptions,
    /// Worker threads; 0 lets the pool decide.
    pub threads: usize,
}

impl Default for TrialConfig {
    fn default() -> Self {
        TrialConfig {
            sigma_rot: 0.05,
            sigma_trans: 0.05,
            pixel_noise_sigma: 0.5,
            n_trials: 100,
            seed: 0,
            first_image_clean: true,
            observation_model: ObservationModel::Full,
            init: InitMode::NoRsSolution,
            init_sigma_rot: 0.01,
            init_sigma_pos: 0.05,
            init_sigma_point: 0.05,
            anchor_cam: 0,
            anchor_param: AnchorParam::Phi1,
            lm: LmOptions::default(),
            threads: 0,
        }
    }
}

impl TrialConfig {
    pub fn validate(&self) -> Result<()> {
        let sigmas = [
            self.sigma_rot,
            self.sigma_trans,
            self.pixel_noise_sigma,
            self.init_sigma_rot,
            self.init_sigma_pos,
            self.init_sigma_point,
        ];
        if sigmas.iter().any(|s| !(s.is_finite() && *s >= 0.0)) {
            return Err(Error::InvalidInput(
                "standard deviations must be finite and non-negative".into(),
            ));
        }
        if self.n_trials == 0 {
            return Err(Error::InvalidInput("n_trials must be at least 1".into()));
        }
        Ok(())
    }
}
