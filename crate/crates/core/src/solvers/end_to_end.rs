//! End-to-end multi-camera fitting.
//!
//! Per trial, an implicit network maps normalized time to joint angles; the
//! network weights, the session's shared per-segment scale, and the shared
//! marker offsets are optimized jointly against reprojection error.
//!
//! Pipeline per session:
//! 1. coverage check (a trial whose markers lack two-camera coverage for most
//!    frames is marked failed and skipped),
//! 2. per-frame triangulation of the 2D keypoints,
//! 3. joint pose+scale solve on a few spread frames of every trial,
//! 4. per-frame damped-least-squares angles against the triangulated clouds,
//! 5. per-trial network initialization (ridge-seeded output layer, then a
//!    short regression onto the triangulated angles),
//! 6. joint refinement of {scale, offsets, all networks} with Adam over
//!    round-robin trial batches, minimizing the reprojection loss.

use nalgebra::DMatrix;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::camera::{triangulate, CameraRig};
use crate::compare::Arm;
use crate::error::{Error, Result};
use crate::mlp::{
    hidden_features, init_params, mlp_eval, output_layer_offset, squash_inverse, Activation,
    MlpSpec,
};
use crate::model::{BodyModel, MarkerCloud, MarkerOffsets, ScaleParams};
use crate::opt::{cosine_scale, AdamState};
use crate::solvers::ik_lm::{seed_pose, solve_marker_ik, IkOptions};
use crate::solvers::loss::{loss_and_grad, loss_value, reprojection_rms_px, LossConfig};
use crate::solvers::TrialObservations;

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct FitConfig {
    /// Hidden widths of the trajectory network.
    pub mlp_hidden: Vec<usize>,
    pub fourier_pairs: usize,
    pub activation: Activation,
    /// Steps of per-trial regression onto triangulated angles.
    pub prefit_steps: usize,
    pub prefit_lr: f64,
    /// Steps of joint reprojection refinement (across all batches).
    pub refine_steps: usize,
    pub refine_lr: f64,
    /// Cosine-decay floor for both optimizers.
    pub cosine_floor: f64,
    /// Trial batches for the joint refinement.
    pub batches: usize,
    pub seed: u64,
    pub loss: LossConfig,
    /// Frames per tape chunk during gradient evaluation.
    pub chunk_frames: usize,
    /// Spread frames per trial entering the joint scale initialization.
    pub init_ik_frames: usize,
    /// Full-session loss is recorded every this many refinement steps.
    pub trace_every: usize,
    /// A trial fails when any marker has two-camera coverage below this
    /// fraction of frames.
    pub min_marker_coverage: f64,
    pub min_cameras: usize,
}

impl Default for FitConfig {
    fn default() -> Self {
        FitConfig {
            mlp_hidden: vec![64, 64],
            fourier_pairs: 8,
            activation: Activation::Tanh,
            prefit_steps: 600,
            prefit_lr: 0.02,
            refine_steps: 450,
            refine_lr: 4e-3,
            cosine_floor: 0.05,
            batches: 8,
            seed: 0,
            loss: LossConfig::default(),
            chunk_frames: 32,
            init_ik_frames: 7,
            trace_every: 25,
            min_marker_coverage: 0.5,
            min_cameras: 2,
        }
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub enum TrialOutcome {
    Fitted {
        final_loss: f64,
        reproj_rms_px: f64,
    },
    Failed {
        reason: String,
    },
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct TrialFitResult {
    pub trial_id: String,
    pub arm: Arm,
    pub rate_hz: f64,
    pub outcome: TrialOutcome,
    /// Per-frame joint angles at the trial rate; empty for failed trials.
    pub theta: Vec<Vec<f64>>,
}

impl TrialFitResult {
    pub fn is_fitted(&self) -> bool {
        matches!(self.outcome, TrialOutcome::Fitted { .. })
    }
}

/// Result of a session fit: scale and offsets shared by every trial, one
/// trajectory per fitted trial, and the recorded full-session loss trace.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct SessionFit {
    pub scale: ScaleParams,
    pub offsets: MarkerOffsets,
    pub trials: Vec<TrialFitResult>,
    /// Full loss sampled during refinement (step, loss).
    pub loss_trace: Vec<(u64, f64)>,
}

fn coverage_failure(
    model: &BodyModel,
    trial: &TrialObservations,
    cfg: &FitConfig,
) -> Option<String> {
    for m in 0..model.n_markers() {
        let cov = trial.marker_coverage(m, cfg.min_cameras, cfg.loss.confidence_floor);
        if cov < cfg.min_marker_coverage {
            return Some(format!(
                "marker `{}` seen by >= {} cameras in only {:.0}% of frames",
                model.markers[m].id,
                cfg.min_cameras,
                cov * 100.0
            ));
        }
    }
    None
}

fn triangulate_trial(
    model: &BodyModel,
    rig: &CameraRig,
    trial: &TrialObservations,
    cfg: &FitConfig,
) -> Vec<MarkerCloud> {
    trial
        .frames
        .iter()
        .map(|frame| {
            let mut cloud = Vec::with_capacity(model.n_markers());
            for m in 0..model.n_markers() {
                let per_cam: Vec<_> = frame.iter().map(|row| row[m]).collect();
                cloud.push(
                    triangulate(rig, &per_cam, cfg.min_cameras, cfg.loss.confidence_floor)
                        .ok()
                        .map(|t| t.point),
                );
            }
            MarkerCloud(cloud)
        })
        .collect()
}

/// Frames used for the joint scale initialization: spread across the trial,
/// preferring complete clouds.
fn pick_init_frames(clouds: &[MarkerCloud], k: usize) -> Vec<usize> {
    let complete: Vec<usize> = (0..clouds.len())
        .filter(|&f| clouds[f].complete())
        .collect();
    let source: Vec<usize> = if complete.len() >= k.max(2) {
        complete
    } else {
        (0..clouds.len()).collect()
    };
    let k = k.min(source.len());
    (0..k)
        .map(|i| source[i * (source.len() - 1) / (k.max(2) - 1).max(1)])
        .collect()
}

/// Ridge-seed the output layer so the network starts at the regression
/// solution of the squash pre-activations given the current hidden features.
fn ridge_output_layer(
    spec: &MlpSpec,
    phi: &mut [f64],
    limits: &[(f64, f64)],
    times: &[f64],
    targets: &[&Vec<f64>],
) {
    let n = times.len();
    if n < 4 {
        return;
    }
    let h_dim = spec.layer_shapes().last().unwrap().0;
    let d = spec.output_dim;
    let mut x = DMatrix::zeros(n, h_dim + 1);
    let mut y = DMatrix::zeros(n, d);
    for (row, (&t, target)) in times.iter().zip(targets).enumerate() {
        let h = hidden_features(spec, phi, t);
        for j in 0..h_dim {
            x[(row, j)] = h[j];
        }
        x[(row, h_dim)] = 1.0;
        for (dof, &(lo, hi)) in limits.iter().enumerate() {
            y[(row, dof)] = squash_inverse(target[dof], lo, hi);
        }
    }
    let mut xtx = x.transpose() * &x;
    for i in 0..xtx.nrows() {
        xtx[(i, i)] += 1e-4;
    }
    let xty = x.transpose() * &y;
    let Some(chol) = xtx.cholesky() else { return };
    let w = chol.solve(&xty); // (h_dim + 1) x d
    let off = output_layer_offset(spec);
    for dof in 0..d {
        for j in 0..h_dim {
            phi[off + dof * h_dim + j] = w[(j, dof)];
        }
        phi[off + h_dim * d + dof] = w[(h_dim, dof)];
    }
}

/// Short Adam regression of one trial's network onto its triangulated
/// angles (chunked tapes over the target frames).
fn prefit_network(
    spec: &MlpSpec,
    phi: &mut Vec<f64>,
    limits: &[(f64, f64)],
    times: &[f64],
    targets: &[&Vec<f64>],
    cfg: &FitConfig,
) -> Result<()> {
    use crate::ad::Tape;
    let n = times.len();
    if n == 0 || cfg.prefit_steps == 0 {
        return Ok(());
    }
    let d = spec.output_dim;
    let norm = 1.0 / (n * d) as f64;
    let chunk = 48usize;
    let mut adam = AdamState::new(phi.len(), cfg.prefit_lr);
    let mut grad = vec![0.0; phi.len()];
    for step in 0..cfg.prefit_steps {
        grad.iter_mut().for_each(|g| *g = 0.0);
        let chunks: Vec<(usize, usize)> = (0..n)
            .step_by(chunk)
            .map(|s| (s, (s + chunk).min(n)))
            .collect();
        let parts: Vec<Result<Vec<f64>>> = chunks
            .par_iter()
            .map(|&(s, e)| {
                let tape = Tape::with_capacity((e - s) * spec.param_count() / 3 + phi.len() + 64);
                let phi_v = tape.leaves(phi);
                let zero = phi_v[0] * 0.0;
                let mut acc = zero;
                for f in s..e {
                    let out = mlp_eval(spec, &phi_v, limits, times[f])?;
                    for (dof, o) in out.into_iter().enumerate() {
                        let r = o - targets[f][dof];
                        acc = acc + r * r;
                    }
                }
                let total = acc * norm;
                let adj = tape.gradient(total)?;
                Ok(adj[..phi.len()].to_vec())
            })
            .collect();
        for part in parts {
            for (g, d) in grad.iter_mut().zip(part?) {
                *g += d;
            }
        }
        let scale = cosine_scale(step as u64, cfg.prefit_steps as u64, cfg.cosine_floor);
        adam.step(phi, &grad, scale)?;
    }
    Ok(())
}

/// Fit one session: shared scale and marker offsets plus one trajectory
/// network per trial, optimized against multi-camera reprojection error.
///
/// Trials with insufficient marker coverage are marked failed and the rest
/// proceed. Deterministic for fixed inputs and seed.
pub fn fit_end_to_end(
    model: &BodyModel,
    rig: &CameraRig,
    trials: &[TrialObservations],
    cfg: &FitConfig,
) -> Result<SessionFit> {
    if trials.is_empty() {
        return Err(Error::Config("no trials to fit".into()));
    }
    rig.validate()?;
    for t in trials {
        t.validate(model, rig.len())?;
    }
    let spec = MlpSpec {
        hidden: cfg.mlp_hidden.clone(),
        output_dim: model.n_dofs(),
        activation: cfg.activation,
        fourier_pairs: cfg.fourier_pairs,
    };
    spec.validate()?;
    let limits = model.dof_limits();

    // 1. Coverage gate.
    let failures: Vec<Option<String>> = trials
        .iter()
        .map(|t| coverage_failure(model, t, cfg))
        .collect();
    let fittable: Vec<usize> = (0..trials.len()).filter(|&i| failures[i].is_none()).collect();
    if fittable.is_empty() {
        return Ok(SessionFit {
            scale: ScaleParams::identity(model),
            offsets: MarkerOffsets::zero(model),
            trials: trials
                .iter()
                .zip(failures)
                .map(|(t, f)| TrialFitResult {
                    trial_id: t.trial_id.clone(),
                    arm: t.arm,
                    rate_hz: t.rate_hz,
                    outcome: TrialOutcome::Failed {
                        reason: f.unwrap_or_else(|| "unfittable".into()),
                    },
                    theta: Vec::new(),
                })
                .collect(),
            loss_trace: Vec::new(),
        });
    }

    // 2. Triangulation.
    let tri_clouds: Vec<Vec<MarkerCloud>> = fittable
        .par_iter()
        .map(|&i| triangulate_trial(model, rig, &trials[i], cfg))
        .collect();

    // 3. Shared scale from spread frames of every fittable trial.
    let mut init_cloud_refs: Vec<&MarkerCloud> = Vec::new();
    for clouds in &tri_clouds {
        for &f in &pick_init_frames(clouds, cfg.init_ik_frames) {
            init_cloud_refs.push(&clouds[f]);
        }
    }
    let init_seeds: Vec<Vec<f64>> = init_cloud_refs
        .iter()
        .map(|c| seed_pose(model, c))
        .collect();
    let joint = solve_marker_ik(
        model,
        &init_cloud_refs,
        &init_seeds,
        None,
        &IkOptions {
            solve_scale: true,
            max_iters: 300,
            ..IkOptions::default()
        },
    )?;
    let scale_init = joint.scale_params(model);
    log::info!(
        "scale init: rmse {:.2e} m, scales {:?}",
        joint.rmse_m,
        scale_init.0
    );

    // 4. Per-frame angles against the triangulated clouds.
    let frame_opts = IkOptions {
        solve_scale: false,
        max_iters: 60,
        step_tol: 1e-9,
        ..IkOptions::default()
    };
    let per_trial_targets: Vec<Vec<Option<Vec<f64>>>> = tri_clouds
        .par_iter()
        .map(|clouds| {
            let mut warm = joint.thetas[0].clone();
            let mut out = Vec::with_capacity(clouds.len());
            for cloud in clouds {
                let present = cloud.0.iter().filter(|p| p.is_some()).count();
                if present * 3 < model.n_dofs() + 4 {
                    out.push(None);
                    continue;
                }
                match solve_marker_ik(
                    model,
                    &[cloud],
                    &[warm.clone()],
                    Some(&scale_init),
                    &frame_opts,
                ) {
                    Ok(res) => {
                        warm = res.thetas[0].clone();
                        out.push(Some(res.thetas.into_iter().next().unwrap()));
                    }
                    Err(_) => out.push(None),
                }
            }
            out
        })
        .collect();

    // 5. Per-trial network initialization.
    let phi_len = spec.param_count();
    let phis: Vec<Result<Vec<f64>>> = fittable
        .par_iter()
        .enumerate()
        .map(|(pos, &ti)| {
            let trial = &trials[ti];
            let n = trial.n_frames();
            let denom = (n.max(2) - 1) as f64;
            let mut rng: rand_chacha::ChaCha20Rng =
                rand::SeedableRng::seed_from_u64(cfg.seed ^ (0xa076_1d64_78bd_642f
                    ^ (ti as u64).wrapping_mul(0x9e37_79b9_7f4a_7c15)));
            let mut phi = init_params(&spec, &mut rng);
            let mut times = Vec::new();
            let mut targets: Vec<&Vec<f64>> = Vec::new();
            for (f, tgt) in per_trial_targets[pos].iter().enumerate() {
                if let Some(t) = tgt {
                    times.push(f as f64 / denom);
                    targets.push(t);
                }
            }
            ridge_output_layer(&spec, &mut phi, &limits, &times, &targets);
            prefit_network(&spec, &mut phi, &limits, &times, &targets, cfg)?;
            Ok(phi)
        })
        .collect();

    // 6. Flat parameter vector: [log-scales | raw offsets | phi per trial].
    let n_scale = model.scalable_segments().len();
    let n_offsets = model.n_markers() * 3;
    let mut params: Vec<f64> = Vec::with_capacity(n_scale + n_offsets + fittable.len() * phi_len);
    params.extend_from_slice(&joint.log_scales);
    params.extend(std::iter::repeat(0.0).take(n_offsets));
    for phi in phis {
        params.extend(phi?);
    }

    // 7. Joint refinement over trial batches.
    let fit_trials: Vec<&TrialObservations> = fittable.iter().map(|&i| &trials[i]).collect();
    let n_batches = cfg.batches.clamp(1, fit_trials.len());
    let batches: Vec<Vec<usize>> = (0..n_batches)
        .map(|b| {
            (0..fit_trials.len())
                .filter(|i| i % n_batches == b)
                .collect()
        })
        .collect();
    let all: Vec<usize> = (0..fit_trials.len()).collect();

    let mut adam = AdamState::new(params.len(), cfg.refine_lr);
    let mut trace = Vec::new();
    for step in 0..cfg.refine_steps {
        if step % cfg.trace_every.max(1) == 0 {
            let full = loss_value(
                model, rig, &spec, &limits, &params, n_scale, n_offsets, phi_len, &fit_trials,
                &all, &cfg.loss,
            )?;
            trace.push((step as u64, full));
        }
        let batch = &batches[step % n_batches];
        let (_, grad) = loss_and_grad(
            model,
            rig,
            &spec,
            &limits,
            &params,
            n_scale,
            n_offsets,
            phi_len,
            &fit_trials,
            batch,
            &cfg.loss,
            cfg.chunk_frames,
        )?;
        let lr_scale = cosine_scale(step as u64, cfg.refine_steps as u64, cfg.cosine_floor);
        adam.step(&mut params, &grad, lr_scale)?;
    }
    let final_loss = loss_value(
        model, rig, &spec, &limits, &params, n_scale, n_offsets, phi_len, &fit_trials, &all,
        &cfg.loss,
    )?;
    trace.push((cfg.refine_steps as u64, final_loss));

    // 8. Extract model-space results.
    let scale = {
        let mut s = vec![1.0; model.n_segments()];
        for (j, &si) in model.scalable_segments().iter().enumerate() {
            s[si] = params[j].exp();
        }
        ScaleParams(s)
    };
    let offsets = {
        let r = cfg.loss.offset_radius_m;
        let raw = &params[n_scale..n_scale + n_offsets];
        MarkerOffsets(
            (0..model.n_markers())
                .map(|m| {
                    [
                        (raw[m * 3] / r).tanh() * r,
                        (raw[m * 3 + 1] / r).tanh() * r,
                        (raw[m * 3 + 2] / r).tanh() * r,
                    ]
                })
                .collect(),
        )
    };

    let mut results: Vec<TrialFitResult> = Vec::with_capacity(trials.len());
    let mut pos_of = vec![usize::MAX; trials.len()];
    for (pos, &ti) in fittable.iter().enumerate() {
        pos_of[ti] = pos;
    }
    for (ti, trial) in trials.iter().enumerate() {
        if let Some(reason) = &failures[ti] {
            results.push(TrialFitResult {
                trial_id: trial.trial_id.clone(),
                arm: trial.arm,
                rate_hz: trial.rate_hz,
                outcome: TrialOutcome::Failed {
                    reason: reason.clone(),
                },
                theta: Vec::new(),
            });
            continue;
        }
        let pos = pos_of[ti];
        let start = n_scale + n_offsets + pos * phi_len;
        let phi = &params[start..start + phi_len];
        let n = trial.n_frames();
        let denom = (n.max(2) - 1) as f64;
        let theta: Vec<Vec<f64>> = (0..n)
            .map(|f| mlp_eval(&spec, phi, &limits, f as f64 / denom))
            .collect::<Result<_>>()?;
        let trial_loss = loss_value(
            model,
            rig,
            &spec,
            &limits,
            &params,
            n_scale,
            n_offsets,
            phi_len,
            &fit_trials,
            &[pos],
            &cfg.loss,
        )?;
        let rms = reprojection_rms_px(
            model,
            rig,
            &scale,
            &offsets,
            &theta,
            trial,
            cfg.loss.confidence_floor,
        )?;
        results.push(TrialFitResult {
            trial_id: trial.trial_id.clone(),
            arm: trial.arm,
            rate_hz: trial.rate_hz,
            outcome: TrialOutcome::Fitted {
                final_loss: trial_loss,
                reproj_rms_px: rms,
            },
            theta,
        });
    }

    Ok(SessionFit {
        scale,
        offsets,
        trials: results,
        loss_trace: trace,
    })
}
