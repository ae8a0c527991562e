//! Damped least-squares (Levenberg-Marquardt) marker fitting.
//!
//! One routine covers both uses: solving per-frame joint angles against 3D
//! marker targets with scale fixed, and jointly solving several frames'
//! angles plus the shared log-scales (static scaling, initialization).
//! Residuals and Jacobians come off the autodiff tape, one backward sweep per
//! residual row.

use nalgebra::{DMatrix, DVector};

use crate::ad::{Real, Tape};
use crate::error::{Error, Result};
use crate::model::{forward_kinematics, BodyModel, MarkerCloud, ScaleParams};
use crate::solvers::loss::expand_scale;

#[derive(Clone, Copy, Debug)]
pub struct IkOptions {
    pub max_iters: usize,
    /// Convergence threshold on the max parameter step, radians / log units.
    pub step_tol: f64,
    pub lambda_init: f64,
    pub solve_scale: bool,
    /// Weight on the soft joint-limit barrier residuals. Keeps the
    /// unconstrained solve off the out-of-range dual Euler branches that
    /// reproject identically.
    pub limit_weight: f64,
    /// Weight of a soft prior pulling each frame's angles toward its
    /// initialization (meters per radian). Damps jitter in weakly observed
    /// DOFs during warm-started per-frame tracking; zero disables it.
    pub prior_weight: f64,
}

impl Default for IkOptions {
    fn default() -> Self {
        IkOptions {
            max_iters: 100,
            step_tol: 1e-10,
            lambda_init: 1e-3,
            solve_scale: false,
            limit_weight: 1.0,
            prior_weight: 0.0,
        }
    }
}

#[derive(Clone, Debug)]
pub struct MarkerIkResult {
    /// One angle vector per input frame, clamped into the joint limits.
    pub thetas: Vec<Vec<f64>>,
    /// Log-scales of the scalable segments (zeros when scale was fixed).
    pub log_scales: Vec<f64>,
    /// RMS marker error over all residuals, meters.
    pub rmse_m: f64,
    pub converged: bool,
    pub iters: usize,
}

impl MarkerIkResult {
    pub fn scale_params(&self, model: &BodyModel) -> ScaleParams {
        let mut s = vec![1.0; model.n_segments()];
        for (j, &si) in model.scalable_segments().iter().enumerate() {
            s[si] = self.log_scales[j].exp();
        }
        ScaleParams(s)
    }
}

struct Residuals {
    r: DVector<f64>,
    jac: DMatrix<f64>,
}

/// Barrier residual of one DOF value: zero inside the limits, linear in the
/// violation outside.
fn limit_violation(theta: f64, lo: f64, hi: f64) -> f64 {
    if theta > hi {
        theta - hi
    } else if theta < lo {
        theta - lo
    } else {
        0.0
    }
}

/// Stack residuals (marker position error in meters, then joint-limit
/// barrier rows) and the Jacobian for all frames. Parameter layout:
/// `[theta(frame 0) | theta(frame 1) | ... | log-scales]`, scale columns
/// absent when it is fixed.
fn residuals_and_jacobian(
    model: &BodyModel,
    clouds: &[&MarkerCloud],
    params: &[f64],
    fixed_scale: Option<&[f64]>,
    n_scale: usize,
    limits: &[(f64, f64)],
    limit_weight: f64,
    prior: Option<(&[f64], f64)>,
) -> Result<Residuals> {
    let d = model.n_dofs();
    let n_frames = clouds.len();
    let n_params = params.len();

    let mut marker_rows = 0usize;
    for c in clouds {
        marker_rows += 3 * c.0.iter().filter(|p| p.is_some()).count();
    }
    let prior_rows = if prior.is_some() { n_frames * d } else { 0 };
    let rows = marker_rows + n_frames * d + prior_rows;
    let mut r = DVector::zeros(rows);
    let mut jac = DMatrix::zeros(rows, n_params);

    let tape = Tape::with_capacity(4 * (d + n_scale + 2000));
    let mut adj = Vec::new();
    let mut row = 0usize;
    for (k, cloud) in clouds.iter().enumerate() {
        tape.clear();
        let theta_v = tape.leaves(&params[k * d..(k + 1) * d]);
        let scale_v = tape.leaves(&params[n_frames * d..n_frames * d + n_scale]);
        let scale = match fixed_scale {
            Some(s) => {
                let one = theta_v[0] * 0.0 + 1.0;
                s.iter().map(|&x| one * x).collect::<Vec<_>>()
            }
            None => expand_scale(model, &scale_v, theta_v[0]),
        };
        let zero = theta_v[0] * 0.0;
        let offsets = vec![zero; model.n_markers() * 3];
        let markers = forward_kinematics(model, &scale, &offsets, &theta_v)?;
        for (mi, target) in cloud.0.iter().enumerate() {
            let Some(target) = target else { continue };
            let p = markers[mi];
            for (coord, t) in [(p.x, target[0]), (p.y, target[1]), (p.z, target[2])] {
                let res = coord - t;
                r[row] = res.val();
                tape.backward_into(res.index(), &mut adj)?;
                for j in 0..d {
                    jac[(row, k * d + j)] = adj[theta_v[j].index() as usize];
                }
                if fixed_scale.is_none() {
                    for j in 0..n_scale {
                        jac[(row, n_frames * d + j)] = adj[scale_v[j].index() as usize];
                    }
                }
                row += 1;
            }
        }
    }
    for k in 0..n_frames {
        for (j, &(lo, hi)) in limits.iter().enumerate() {
            let theta = params[k * d + j];
            let v = limit_violation(theta, lo, hi);
            if v != 0.0 {
                r[row] = limit_weight * v;
                jac[(row, k * d + j)] = limit_weight;
            }
            row += 1;
        }
    }
    if let Some((targets, w)) = prior {
        for i in 0..n_frames * d {
            r[row] = w * (params[i] - targets[i]);
            jac[(row, i)] = w;
            row += 1;
        }
    }
    Ok(Residuals { r, jac })
}

fn cost_only(
    model: &BodyModel,
    clouds: &[&MarkerCloud],
    params: &[f64],
    fixed_scale: Option<&[f64]>,
    n_scale: usize,
    limits: &[(f64, f64)],
    limit_weight: f64,
    prior: Option<(&[f64], f64)>,
) -> Result<(f64, f64)> {
    let d = model.n_dofs();
    let n_frames = clouds.len();
    let mut marker_cost = 0.0;
    let mut barrier_cost = 0.0;
    for (k, cloud) in clouds.iter().enumerate() {
        let theta = &params[k * d..(k + 1) * d];
        let scale_vec: Vec<f64> = match fixed_scale {
            Some(s) => s.to_vec(),
            None => {
                let logs = &params[n_frames * d..n_frames * d + n_scale];
                expand_scale(model, logs, logs.first().copied().unwrap_or(0.0))
            }
        };
        let offsets = vec![0.0; model.n_markers() * 3];
        let markers = forward_kinematics(model, &scale_vec, &offsets, theta)?;
        for (mi, target) in cloud.0.iter().enumerate() {
            let Some(t) = target else { continue };
            let p = markers[mi].values();
            marker_cost +=
                (p[0] - t[0]).powi(2) + (p[1] - t[1]).powi(2) + (p[2] - t[2]).powi(2);
        }
        for (j, &(lo, hi)) in limits.iter().enumerate() {
            let v = limit_weight * limit_violation(theta[j], lo, hi);
            barrier_cost += v * v;
        }
    }
    if let Some((targets, w)) = prior {
        let d = model.n_dofs();
        for i in 0..n_frames * d {
            let v = w * (params[i] - targets[i]);
            barrier_cost += v * v;
        }
    }
    Ok((marker_cost + barrier_cost, marker_cost))
}

/// Fit joint angles (and optionally shared log-scales) to 3D marker targets.
///
/// `init_thetas` supplies one starting angle vector per cloud. Markers set to
/// `None` in a cloud are skipped. The solve is unconstrained; angles are
/// clamped into the joint limits on output.
pub fn solve_marker_ik(
    model: &BodyModel,
    clouds: &[&MarkerCloud],
    init_thetas: &[Vec<f64>],
    fixed_scale: Option<&ScaleParams>,
    opts: &IkOptions,
) -> Result<MarkerIkResult> {
    let d = model.n_dofs();
    let n_frames = clouds.len();
    if n_frames == 0 || init_thetas.len() != n_frames {
        return Err(Error::DimensionMismatch {
            context: "marker ik frames",
            expected: n_frames,
            got: init_thetas.len(),
        });
    }
    let n_scale = if opts.solve_scale {
        model.scalable_segments().len()
    } else {
        0
    };
    let fixed: Option<Vec<f64>> = match (opts.solve_scale, fixed_scale) {
        (true, _) => None,
        (false, Some(s)) => {
            s.validate(model)?;
            Some(s.0.clone())
        }
        (false, None) => Some(vec![1.0; model.n_segments()]),
    };

    let mut params: Vec<f64> = Vec::with_capacity(n_frames * d + n_scale);
    for th in init_thetas {
        if th.len() != d {
            return Err(Error::DimensionMismatch {
                context: "marker ik theta",
                expected: d,
                got: th.len(),
            });
        }
        params.extend_from_slice(th);
    }
    params.extend(std::iter::repeat(0.0).take(n_scale));

    let n_resid: usize = clouds
        .iter()
        .map(|c| 3 * c.0.iter().filter(|p| p.is_some()).count())
        .sum();
    if n_resid == 0 {
        return Err(Error::Underdetermined { needed: 1, got: 0 });
    }

    let limits = model.dof_limits();
    let prior_thetas: Vec<f64> = params[..n_frames * d].to_vec();
    let prior = (opts.prior_weight > 0.0).then_some((prior_thetas.as_slice(), opts.prior_weight));
    let mut lambda = opts.lambda_init;
    let (mut cost, mut marker_cost) = cost_only(
        model,
        clouds,
        &params,
        fixed.as_deref(),
        n_scale,
        &limits,
        opts.limit_weight,
        prior,
    )?;
    let mut converged = false;
    let mut iters = 0;

    for it in 0..opts.max_iters {
        iters = it + 1;
        let Residuals { r, jac } = residuals_and_jacobian(
            model,
            clouds,
            &params,
            fixed.as_deref(),
            n_scale,
            &limits,
            opts.limit_weight,
            prior,
        )?;
        let h = jac.transpose() * &jac;
        let g = jac.transpose() * &r;

        let mut accepted = false;
        for _ in 0..12 {
            // Marquardt scaling keeps the damping meaningful across units.
            let mut damped = h.clone();
            for i in 0..damped.nrows() {
                damped[(i, i)] += lambda * h[(i, i)].max(1e-12);
            }
            let Some(chol) = damped.cholesky() else {
                lambda *= 10.0;
                continue;
            };
            let delta = chol.solve(&(-&g));
            let mut trial: Vec<f64> = params.clone();
            for (p, dl) in trial.iter_mut().zip(delta.iter()) {
                *p += dl;
            }
            let (new_cost, new_marker) = cost_only(
                model,
                clouds,
                &trial,
                fixed.as_deref(),
                n_scale,
                &limits,
                opts.limit_weight,
                prior,
            )?;
            if new_cost <= cost {
                let step = delta.amax();
                params = trial;
                cost = new_cost;
                marker_cost = new_marker;
                lambda = (lambda / 3.0).max(1e-14);
                accepted = true;
                if step < opts.step_tol {
                    converged = true;
                }
                break;
            }
            lambda *= 10.0;
        }
        if !accepted {
            // Damping exhausted; treat tiny gradients as convergence.
            converged = g.amax() < 1e-9;
            break;
        }
        if converged {
            break;
        }
    }

    let mut thetas = Vec::with_capacity(n_frames);
    for k in 0..n_frames {
        let mut th = params[k * d..(k + 1) * d].to_vec();
        model.clamp_to_limits(&mut th);
        thetas.push(th);
    }
    let log_scales = params[n_frames * d..n_frames * d + n_scale].to_vec();
    Ok(MarkerIkResult {
        thetas,
        log_scales,
        rmse_m: (marker_cost / n_resid as f64).sqrt(),
        converged,
        iters,
    })
}

/// Initial pose guess from a marker cloud: the trunk's rigid transform is
/// recovered from its (at least three) markers by a Kabsch alignment, arm
/// DOFs start at a relaxed sitting posture. Falls back to limit midpoints
/// when trunk markers are missing.
pub fn seed_pose(model: &BodyModel, cloud: &MarkerCloud) -> Vec<f64> {
    use nalgebra::{Matrix3, Vector3};

    let mut theta: Vec<f64> = model
        .dof_limits()
        .iter()
        .map(|(lo, hi)| 0.5 * (lo + hi))
        .collect();

    // Relaxed arm posture, well inside the unique Euler branch.
    for side in ['r', 'l'] {
        let mut set = |name: String, deg: f64| {
            if let Some(i) = model.dof_index(&name) {
                theta[i] = deg.to_radians();
            }
        };
        set(format!("shoulder_flexion_{side}"), 20.0);
        set(format!("shoulder_abduction_{side}"), 20.0);
        set(format!("shoulder_rotation_{side}"), 0.0);
        set(format!("elbow_flexion_{side}"), 60.0);
        set(format!("elbow_pronation_{side}"), -10.0);
        set(format!("wrist_flexion_{side}"), 0.0);
        set(format!("wrist_deviation_{side}"), 0.0);
    }

    // Trunk from its own markers.
    let trunk_markers: Vec<(Vector3<f64>, Vector3<f64>)> = model
        .markers
        .iter()
        .enumerate()
        .filter(|(mi, m)| m.segment == "trunk" && cloud.0[*mi].is_some())
        .map(|(mi, m)| {
            (
                Vector3::from(m.local_offset),
                Vector3::from(cloud.0[mi].unwrap()),
            )
        })
        .collect();
    if trunk_markers.len() >= 3 {
        let n = trunk_markers.len() as f64;
        let c_local: Vector3<f64> = trunk_markers.iter().map(|(l, _)| l).sum::<Vector3<f64>>() / n;
        let c_world: Vector3<f64> = trunk_markers.iter().map(|(_, w)| w).sum::<Vector3<f64>>() / n;
        let mut cov = Matrix3::zeros();
        for (l, w) in &trunk_markers {
            cov += (w - c_world) * (l - c_local).transpose();
        }
        let svd = cov.svd(true, true);
        if let (Some(u), Some(vt)) = (svd.u, svd.v_t) {
            let mut rot = u * vt;
            if rot.determinant() < 0.0 {
                let mut flip = Matrix3::identity();
                flip[(2, 2)] = -1.0;
                rot = u * flip * vt;
            }
            let t = c_world - rot * c_local;
            // Intrinsic x-y-z Euler extraction for R = Rx(a) Ry(b) Rz(c).
            let b = rot[(0, 2)].clamp(-1.0, 1.0).asin();
            let a = (-rot[(1, 2)]).atan2(rot[(2, 2)]);
            let c = (-rot[(0, 1)]).atan2(rot[(0, 0)]);
            let mut set = |name: &str, v: f64| {
                if let Some(i) = model.dof_index(name) {
                    theta[i] = v;
                }
            };
            set("trunk_tx", t.x);
            set("trunk_ty", t.y);
            set("trunk_tz", t.z);
            set("trunk_rx", a);
            set("trunk_ry", b);
            set("trunk_rz", c);
        }
    }
    model.clamp_to_limits(&mut theta);
    theta
}
