//! The two fitting pipelines.
//!
//! * [`fit_end_to_end`]: trajectory networks, shared body scale, and marker
//!   offsets jointly optimized against multi-camera reprojection error over
//!   batches of trials.
//! * [`fit_two_stage`]: classical marker-based baseline; scale solved on a
//!   static window, then per-frame damped least squares.
//!
//! Both consume the same body model, which makes their joint-angle outputs
//! directly comparable on synthetic data.

mod end_to_end;
mod ik_lm;
mod loss;
mod two_stage;

pub use end_to_end::{fit_end_to_end, FitConfig, SessionFit, TrialFitResult, TrialOutcome};
pub use ik_lm::{seed_pose, solve_marker_ik, IkOptions, MarkerIkResult};
pub use loss::{reprojection_loss, reprojection_rms_px, LossConfig};
pub use two_stage::{fit_two_stage, fit_two_stage_auto, TwoStageConfig, TwoStageFit};

use serde::{Deserialize, Serialize};

use crate::camera::Observation2D;
use crate::compare::Arm;
use crate::error::{Error, Result};
use crate::model::{BodyModel, MarkerCloud};

/// Per-camera, per-marker 2D observations for every frame of one trial.
/// `frames[f][camera][marker]` aligns with the rig's camera order and the
/// model's marker order.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct TrialObservations {
    pub trial_id: String,
    pub arm: Arm,
    pub rate_hz: f64,
    pub frames: Vec<Vec<Vec<Option<Observation2D>>>>,
}

impl TrialObservations {
    pub fn n_frames(&self) -> usize {
        self.frames.len()
    }

    pub fn validate(&self, model: &BodyModel, n_cameras: usize) -> Result<()> {
        if self.rate_hz <= 0.0 {
            return Err(Error::Config("trial rate must be positive".into()));
        }
        for frame in &self.frames {
            if frame.len() != n_cameras {
                return Err(Error::DimensionMismatch {
                    context: "trial cameras",
                    expected: n_cameras,
                    got: frame.len(),
                });
            }
            for row in frame {
                if row.len() != model.n_markers() {
                    return Err(Error::DimensionMismatch {
                        context: "trial markers",
                        expected: model.n_markers(),
                        got: row.len(),
                    });
                }
            }
        }
        Ok(())
    }

    /// Fraction of frames in which `marker` is seen by at least `min_cams`
    /// cameras at or above the confidence floor.
    pub fn marker_coverage(&self, marker: usize, min_cams: usize, floor: f64) -> f64 {
        if self.frames.is_empty() {
            return 0.0;
        }
        let covered = self
            .frames
            .iter()
            .filter(|frame| {
                frame
                    .iter()
                    .filter(|row| row[marker].map_or(false, |o| o.usable(floor)))
                    .count()
                    >= min_cams
            })
            .count();
        covered as f64 / self.frames.len() as f64
    }
}

/// Uniformly sampled 3D marker track (measured or triangulated).
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct Marker3DTrial {
    pub rate_hz: f64,
    pub frames: Vec<MarkerCloud>,
}

impl Marker3DTrial {
    pub fn n_frames(&self) -> usize {
        self.frames.len()
    }
}
