//! Confidence-weighted robust reprojection loss over trajectory-network
//! parameters, shared scale, and marker offsets.
//!
//! The loss of a set of trials is
//!
//! ```text
//!   sum_{trial, frame, camera, marker} w * (huber(du) + huber(dv)) / W
//! + smoothness_weight * mean over interior frames of |theta''|^2
//! + offset_penalty * mean squared offset
//! ```
//!
//! with `w = confidence^2`, `W` the total weight of all usable observations
//! in the call, and `theta''` the second difference of the network output
//! scaled to rad/s^2. Gradients run over the same generic code on per-chunk
//! tapes, so the value and gradient paths cannot drift apart.

use std::ops::Range;

use serde::{Deserialize, Serialize};

use crate::ad::{Real, Tape, Var};
use crate::camera::{project, CameraRig};
use crate::error::Result;
use crate::mlp::{mlp_eval, MlpSpec};
use crate::model::{forward_kinematics, BodyModel, MarkerOffsets, ScaleParams};
use crate::solvers::TrialObservations;

#[derive(Clone, Copy, Debug, Serialize, Deserialize)]
pub struct LossConfig {
    /// Huber transition point, pixels (applied per residual component).
    pub huber_delta_px: f64,
    /// Observations below this confidence are excluded.
    pub confidence_floor: f64,
    /// Weight of the squared second-difference (rad/s^2) regularizer.
    pub smoothness_weight: f64,
    /// Weight of the mean squared marker-offset penalty (m^2).
    pub offset_penalty: f64,
    /// Componentwise bound on marker offsets, meters.
    pub offset_radius_m: f64,
}

impl Default for LossConfig {
    fn default() -> Self {
        LossConfig {
            huber_delta_px: 10.0,
            confidence_floor: 0.3,
            smoothness_weight: 1e-3,
            offset_penalty: 10.0,
            offset_radius_m: 0.05,
        }
    }
}

fn huber<S: Real>(x: S, delta: f64) -> S {
    if x.val().abs() <= delta {
        x * x * 0.5
    } else {
        (x.abs() - 0.5 * delta) * delta
    }
}

/// Total observation weight and smoothness-term count of a set of trials;
/// both are data properties, independent of the parameters.
pub(crate) fn normalizers(
    trials: &[&TrialObservations],
    model: &BodyModel,
    cfg: &LossConfig,
) -> (f64, usize) {
    let mut weight = 0.0;
    let mut smooth_terms = 0usize;
    for t in trials {
        for frame in &t.frames {
            for row in frame {
                for obs in row.iter().flatten() {
                    if obs.usable(cfg.confidence_floor) {
                        weight += obs.confidence * obs.confidence;
                    }
                }
            }
        }
        smooth_terms += t.n_frames().saturating_sub(2) * model.n_dofs();
    }
    (weight, smooth_terms)
}

/// Map log-scale parameters of the scalable segments onto the full
/// per-segment scale vector (non-scalable segments pinned at 1).
pub(crate) fn expand_scale<S: Real>(model: &BodyModel, scale_p: &[S], any: S) -> Vec<S> {
    let one = any * 0.0 + 1.0;
    let mut scale = vec![one; model.n_segments()];
    for (j, &si) in model.scalable_segments().iter().enumerate() {
        scale[si] = scale_p[j].exp();
    }
    scale
}

/// Map raw offset parameters onto bounded offsets via `r * tanh(x / r)`.
pub(crate) fn expand_offsets<S: Real>(offset_p: &[S], radius: f64) -> Vec<S> {
    offset_p
        .iter()
        .map(|&x| (x * (1.0 / radius)).tanh() * radius)
        .collect()
}

/// Data-term and smoothness contributions of one trial over a frame range.
///
/// `data_frames` selects the frames whose observations enter the data term;
/// smoothness second differences are taken at interior centers within the
/// same range. Network evaluation covers one ghost frame on each side so
/// chunked evaluation composes exactly.
#[allow(clippy::too_many_arguments)]
pub(crate) fn eval_trial_range<S: Real>(
    model: &BodyModel,
    rig: &CameraRig,
    spec: &MlpSpec,
    limits: &[(f64, f64)],
    scale: &[S],
    offsets: &[S],
    phi: &[S],
    trial: &TrialObservations,
    data_frames: Range<usize>,
    cfg: &LossConfig,
) -> Result<(S, S)> {
    let n = trial.n_frames();
    let t_denom = (n.max(2) - 1) as f64;
    let eval_start = data_frames.start.saturating_sub(1);
    let eval_end = (data_frames.end + 1).min(n);

    let mut thetas: Vec<Vec<S>> = Vec::with_capacity(eval_end - eval_start);
    for f in eval_start..eval_end {
        thetas.push(mlp_eval(spec, phi, limits, f as f64 / t_denom)?);
    }
    let theta_at = |f: usize| &thetas[f - eval_start];

    let zero = phi[0] * 0.0;
    let mut data_sum = zero;
    let mut smooth_sum = zero;

    for f in data_frames.clone() {
        let markers = forward_kinematics(model, scale, offsets, theta_at(f))?;
        for (ci, cam) in rig.cameras.iter().enumerate() {
            let row = &trial.frames[f][ci];
            for (mi, obs) in row.iter().enumerate() {
                let Some(obs) = obs else { continue };
                if !obs.usable(cfg.confidence_floor) {
                    continue;
                }
                let p = markers[mi];
                let (u, v) = match project(&cam.intrinsics, &cam.extrinsics, p) {
                    Ok(uv) => uv,
                    Err(_) => {
                        // A pose behind a camera contributes nothing; the
                        // optimizer never starts there and the skip count
                        // is visible through the residual diagnostics.
                        log::warn!(
                            "trial {}: marker {mi} behind camera {ci} at frame {f}",
                            trial.trial_id
                        );
                        continue;
                    }
                };
                let w = obs.confidence * obs.confidence;
                let du = u - obs.u;
                let dv = v - obs.v;
                data_sum =
                    data_sum + (huber(du, cfg.huber_delta_px) + huber(dv, cfg.huber_delta_px)) * w;
            }
        }

        if cfg.smoothness_weight > 0.0 && f >= 1 && f + 1 < n && f + 1 < eval_end {
            let rate2 = trial.rate_hz * trial.rate_hz;
            let (prev, cur, next) = (theta_at(f - 1), theta_at(f), theta_at(f + 1));
            for d in 0..model.n_dofs() {
                let accel = (next[d] + prev[d] - cur[d] * 2.0) * rate2;
                smooth_sum = smooth_sum + accel * accel;
            }
        }
    }
    Ok((data_sum, smooth_sum))
}

pub(crate) fn offset_penalty_term<S: Real>(offset_p: &[S], cfg: &LossConfig) -> S {
    let offsets = expand_offsets(offset_p, cfg.offset_radius_m);
    let mut acc = offsets[0] * offsets[0];
    for o in &offsets[1..] {
        acc = acc + *o * *o;
    }
    acc * (cfg.offset_penalty / offsets.len() as f64)
}

/// Full reprojection loss (plain value path) over explicit model-space
/// parameters: per-segment scales, bounded marker offsets, and one network
/// block per trial.
pub fn reprojection_loss(
    model: &BodyModel,
    rig: &CameraRig,
    scale: &ScaleParams,
    offsets: &MarkerOffsets,
    phi_blocks: &[&[f64]],
    trials: &[&TrialObservations],
    spec: &MlpSpec,
    cfg: &LossConfig,
) -> Result<f64> {
    scale.validate(model)?;
    offsets.validate(model, cfg.offset_radius_m)?;
    let limits = model.dof_limits();
    let (weight, smooth_terms) = normalizers(trials, model, cfg);
    let flat_offsets: Vec<f64> = offsets.0.iter().flatten().copied().collect();

    let mut data = 0.0;
    let mut smooth = 0.0;
    for (trial, phi) in trials.iter().zip(phi_blocks) {
        let (d, s) = eval_trial_range(
            model,
            rig,
            spec,
            &limits,
            &scale.0,
            &flat_offsets,
            phi,
            trial,
            0..trial.n_frames(),
            cfg,
        )?;
        data += d;
        smooth += s;
    }
    let mut loss = if weight > 0.0 { data / weight } else { 0.0 };
    if smooth_terms > 0 && cfg.smoothness_weight > 0.0 {
        loss += smooth * cfg.smoothness_weight / smooth_terms as f64;
    }
    if cfg.offset_penalty > 0.0 {
        let sq: f64 = offsets.0.iter().flatten().map(|c| c * c).sum();
        loss += cfg.offset_penalty * sq / (model.n_markers() * 3) as f64;
    }
    Ok(loss)
}

/// Confidence-weighted RMS pixel residual of one trial under the given
/// parameters (diagnostic; no robustification).
pub fn reprojection_rms_px(
    model: &BodyModel,
    rig: &CameraRig,
    scale: &ScaleParams,
    offsets: &MarkerOffsets,
    theta_frames: &[Vec<f64>],
    trial: &TrialObservations,
    confidence_floor: f64,
) -> Result<f64> {
    let flat: Vec<f64> = offsets.0.iter().flatten().copied().collect();
    let mut sq = 0.0;
    let mut wsum = 0.0;
    for (f, theta) in theta_frames.iter().enumerate() {
        let markers = forward_kinematics(model, &scale.0, &flat, theta)?;
        for (ci, cam) in rig.cameras.iter().enumerate() {
            for (mi, obs) in trial.frames[f][ci].iter().enumerate() {
                let Some(obs) = obs else { continue };
                if !obs.usable(confidence_floor) {
                    continue;
                }
                if let Ok((u, v)) = project(&cam.intrinsics, &cam.extrinsics, markers[mi]) {
                    let w = obs.confidence * obs.confidence;
                    sq += w * ((u - obs.u).powi(2) + (v - obs.v).powi(2));
                    wsum += w;
                }
            }
        }
    }
    Ok(if wsum > 0.0 { (sq / wsum).sqrt() } else { 0.0 })
}

/// Loss value over the flat fit-parameter layout: the plain-`f64`
/// instantiation of the same generic evaluation the gradient path uses.
#[allow(clippy::too_many_arguments)]
pub(crate) fn loss_value(
    model: &BodyModel,
    rig: &CameraRig,
    spec: &MlpSpec,
    limits: &[(f64, f64)],
    params: &[f64],
    n_scale: usize,
    n_offsets: usize,
    phi_len: usize,
    trials: &[&TrialObservations],
    subset: &[usize],
    cfg: &LossConfig,
) -> Result<f64> {
    let subset_trials: Vec<&TrialObservations> = subset.iter().map(|&i| trials[i]).collect();
    let (weight, smooth_terms) = normalizers(&subset_trials, model, cfg);
    let scale_p = &params[..n_scale];
    let offset_p = &params[n_scale..n_scale + n_offsets];
    let scale = expand_scale(model, scale_p, 0.0);
    let offsets = expand_offsets(offset_p, cfg.offset_radius_m);

    let mut data = 0.0;
    let mut smooth = 0.0;
    for &ti in subset {
        let start = n_scale + n_offsets + ti * phi_len;
        let phi = &params[start..start + phi_len];
        let (d, s) = eval_trial_range(
            model,
            rig,
            spec,
            limits,
            &scale,
            &offsets,
            phi,
            trials[ti],
            0..trials[ti].n_frames(),
            cfg,
        )?;
        data += d;
        smooth += s;
    }
    let mut loss = if weight > 0.0 { data / weight } else { 0.0 };
    if smooth_terms > 0 && cfg.smoothness_weight > 0.0 {
        loss += smooth * cfg.smoothness_weight / smooth_terms as f64;
    }
    if cfg.offset_penalty > 0.0 && n_offsets > 0 {
        loss += offset_penalty_term(offset_p, cfg);
    }
    Ok(loss)
}

/// Chunk descriptor for the gradient path: one trial's frame range plus where
/// its parameter blocks live in the flat vector.
pub(crate) struct ChunkJob {
    pub trial_idx: usize,
    pub frames: Range<usize>,
}

/// Loss and gradient over the flat parameter layout
/// `[log-scales | raw offsets | phi(trial 0) | phi(trial 1) | ...]` for a
/// subset of trials. Chunks evaluate on their own tapes in parallel and are
/// reduced in a fixed order, so results are deterministic.
#[allow(clippy::too_many_arguments)]
pub(crate) fn loss_and_grad(
    model: &BodyModel,
    rig: &CameraRig,
    spec: &MlpSpec,
    limits: &[(f64, f64)],
    params: &[f64],
    n_scale: usize,
    n_offsets: usize,
    phi_len: usize,
    trials: &[&TrialObservations],
    subset: &[usize],
    cfg: &LossConfig,
    chunk_frames: usize,
) -> Result<(f64, Vec<f64>)> {
    use rayon::prelude::*;

    let subset_trials: Vec<&TrialObservations> = subset.iter().map(|&i| trials[i]).collect();
    let (weight, smooth_terms) = normalizers(&subset_trials, model, cfg);
    let data_norm = if weight > 0.0 { 1.0 / weight } else { 0.0 };
    let smooth_norm = if smooth_terms > 0 {
        cfg.smoothness_weight / smooth_terms as f64
    } else {
        0.0
    };

    let mut jobs: Vec<ChunkJob> = Vec::new();
    for &ti in subset {
        let n = trials[ti].n_frames();
        let mut start = 0;
        while start < n {
            let end = (start + chunk_frames).min(n);
            jobs.push(ChunkJob {
                trial_idx: ti,
                frames: start..end,
            });
            start = end;
        }
    }

    let scale_p = &params[..n_scale];
    let offset_p = &params[n_scale..n_scale + n_offsets];
    let phi_of = |ti: usize| {
        let start = n_scale + n_offsets + ti * phi_len;
        &params[start..start + phi_len]
    };

    struct ChunkOut {
        trial_idx: usize,
        loss: f64,
        grad_scale: Vec<f64>,
        grad_offsets: Vec<f64>,
        grad_phi: Vec<f64>,
    }

    let outputs: Vec<Result<ChunkOut>> = jobs
        .par_iter()
        .map(|job| {
            let trial = trials[job.trial_idx];
            let phi_vals = phi_of(job.trial_idx);
            let tape = Tape::with_capacity(
                (job.frames.len() + 2) * (spec.param_count() / 2 + 4000)
                    + params.len(),
            );
            let scale_v = tape.leaves(scale_p);
            let offset_v = tape.leaves(offset_p);
            let phi_v = tape.leaves(phi_vals);

            let scale = expand_scale(model, &scale_v, scale_v[0]);
            let offsets = expand_offsets(&offset_v, cfg.offset_radius_m);
            let (data, smooth) = eval_trial_range(
                model,
                rig,
                spec,
                limits,
                &scale,
                &offsets,
                &phi_v,
                trial,
                job.frames.clone(),
                cfg,
            )?;
            let total: Var<'_> = data * data_norm + smooth * smooth_norm;
            let adj = tape.gradient(total)?;
            Ok(ChunkOut {
                trial_idx: job.trial_idx,
                loss: total.val(),
                grad_scale: adj[..n_scale].to_vec(),
                grad_offsets: adj[n_scale..n_scale + n_offsets].to_vec(),
                grad_phi: adj[n_scale + n_offsets..n_scale + n_offsets + phi_len].to_vec(),
            })
        })
        .collect();

    let mut loss = 0.0;
    let mut grad = vec![0.0; params.len()];
    for out in outputs {
        let out = out?;
        loss += out.loss;
        for (g, d) in grad[..n_scale].iter_mut().zip(&out.grad_scale) {
            *g += d;
        }
        for (g, d) in grad[n_scale..n_scale + n_offsets]
            .iter_mut()
            .zip(&out.grad_offsets)
        {
            *g += d;
        }
        let phi_start = n_scale + n_offsets + out.trial_idx * phi_len;
        for (g, d) in grad[phi_start..phi_start + phi_len]
            .iter_mut()
            .zip(&out.grad_phi)
        {
            *g += d;
        }
    }

    // Offset penalty enters once per call, on its own small tape.
    if cfg.offset_penalty > 0.0 && n_offsets > 0 {
        let tape = Tape::new();
        let offset_v = tape.leaves(offset_p);
        let pen = offset_penalty_term(&offset_v, cfg);
        let adj = tape.gradient(pen)?;
        loss += pen.val();
        for (g, d) in grad[n_scale..n_scale + n_offsets].iter_mut().zip(&adj) {
            *g += d;
        }
    }

    Ok((loss, grad))
}
