//! Two-stage marker-based baseline: scale the model on a static window, then
//! solve each frame's joint angles against the 3D markers by damped least
//! squares, warm-started from the previous frame.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{BodyModel, MarkerCloud, ScaleParams};
use crate::solvers::ik_lm::{seed_pose, solve_marker_ik, IkOptions};
use crate::solvers::Marker3DTrial;

#[derive(Clone, Copy, Debug, Serialize, Deserialize)]
pub struct TwoStageConfig {
    /// Minimum accepted static window, seconds.
    pub min_static_window_s: f64,
    /// Static window taken from the head of the trial by
    /// [`fit_two_stage_auto`], seconds.
    pub static_window_s: f64,
    /// Static solve marker RMSE above this is treated as divergence, meters.
    pub static_rmse_limit_m: f64,
    pub max_frame_iters: usize,
    pub step_tol: f64,
}

impl Default for TwoStageConfig {
    fn default() -> Self {
        TwoStageConfig {
            min_static_window_s: 0.5,
            static_window_s: 0.5,
            static_rmse_limit_m: 0.05,
            max_frame_iters: 100,
            step_tol: 1e-10,
        }
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct TwoStageFit {
    pub scale: ScaleParams,
    /// Per-frame joint angles at the marker rate.
    pub theta: Vec<Vec<f64>>,
    pub rate_hz: f64,
    /// Per-frame marker RMSE, meters.
    pub marker_rmse_m: Vec<f64>,
    /// Frames whose per-frame solve did not converge.
    pub flagged_frames: Vec<usize>,
    pub static_rmse_m: f64,
}

fn mean_cloud(frames: &[MarkerCloud], n_markers: usize) -> Result<MarkerCloud> {
    let mut sums = vec![[0.0f64; 3]; n_markers];
    let mut counts = vec![0usize; n_markers];
    for cloud in frames {
        for (m, p) in cloud.0.iter().enumerate() {
            if let Some(p) = p {
                for k in 0..3 {
                    sums[m][k] += p[k];
                }
                counts[m] += 1;
            }
        }
    }
    Ok(MarkerCloud(
        sums.into_iter()
            .zip(counts)
            .map(|(s, c)| {
                if c == 0 {
                    None
                } else {
                    Some([s[0] / c as f64, s[1] / c as f64, s[2] / c as f64])
                }
            })
            .collect(),
    ))
}

/// Stage 1 + stage 2 with an explicit static window.
///
/// The static window must span at least the configured minimum; motion frames
/// must be complete (gap filling happens upstream).
pub fn fit_two_stage(
    model: &BodyModel,
    static_window: &Marker3DTrial,
    motion: &Marker3DTrial,
    cfg: &TwoStageConfig,
) -> Result<TwoStageFit> {
    let window_s = static_window.n_frames() as f64 / static_window.rate_hz;
    if window_s + 1e-9 < cfg.min_static_window_s {
        return Err(Error::Scaling(format!(
            "static window of {window_s:.3} s is shorter than the required {} s",
            cfg.min_static_window_s
        )));
    }
    for (f, cloud) in motion.frames.iter().enumerate() {
        if !cloud.complete() {
            return Err(Error::Scaling(format!(
                "motion markers incomplete at frame {f}; gap-fill upstream"
            )));
        }
    }

    // Stage 1: one averaged static cloud, joint pose + scale solve.
    let static_cloud = mean_cloud(&static_window.frames, model.n_markers())?;
    let stage1 = solve_marker_ik(
        model,
        &[&static_cloud],
        &[seed_pose(model, &static_cloud)],
        None,
        &IkOptions {
            solve_scale: true,
            max_iters: 200,
            step_tol: cfg.step_tol,
            ..IkOptions::default()
        },
    )?;
    if stage1.rmse_m > cfg.static_rmse_limit_m || !stage1.rmse_m.is_finite() {
        return Err(Error::Scaling(format!(
            "static marker RMSE {:.4} m exceeds {:.4} m",
            stage1.rmse_m, cfg.static_rmse_limit_m
        )));
    }
    let scale = stage1.scale_params(model);

    // Stage 2: per-frame solves, warm-started, with a soft prior toward the
    // previous frame to damp jitter in weakly observed DOFs.
    let frame_opts = IkOptions {
        solve_scale: false,
        max_iters: cfg.max_frame_iters,
        step_tol: cfg.step_tol,
        prior_weight: 0.02,
        ..IkOptions::default()
    };
    let mut theta = Vec::with_capacity(motion.n_frames());
    let mut rmse = Vec::with_capacity(motion.n_frames());
    let mut flagged = Vec::new();
    let mut warm = stage1.thetas[0].clone();
    for (f, cloud) in motion.frames.iter().enumerate() {
        let res = solve_marker_ik(model, &[cloud], &[warm.clone()], Some(&scale), &frame_opts)?;
        if !res.converged {
            flagged.push(f);
        }
        warm = res.thetas[0].clone();
        theta.push(res.thetas.into_iter().next().unwrap());
        rmse.push(res.rmse_m);
    }

    Ok(TwoStageFit {
        scale,
        theta,
        rate_hz: motion.rate_hz,
        marker_rmse_m: rmse,
        flagged_frames: flagged,
        static_rmse_m: stage1.rmse_m,
    })
}

/// Convenience wrapper for trials that begin at rest: the first
/// `static_window_s` seconds serve as the static window, and the whole trial
/// is fit as motion.
pub fn fit_two_stage_auto(
    model: &BodyModel,
    trial: &Marker3DTrial,
    cfg: &TwoStageConfig,
) -> Result<TwoStageFit> {
    let k = ((cfg.static_window_s * trial.rate_hz).round() as usize).min(trial.n_frames());
    let window = Marker3DTrial {
        rate_hz: trial.rate_hz,
        frames: trial.frames[..k].to_vec(),
    };
    fit_two_stage(model, &window, trial, cfg)
}
