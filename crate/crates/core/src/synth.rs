//! Seeded ground-truth scenario generator: drinking-like joint trajectories
//! from minimum-jerk keyframe blends, virtual camera rigs, rendered 2D/3D
//! observations with noise models, and series corruption for validating the
//! comparison pipeline.

use rand::prelude::*;
use rand_chacha::ChaCha20Rng;
use serde::{Deserialize, Serialize};

use crate::camera::{arc_rig, project, CameraRig, Observation2D};
use crate::compare::Arm;
use crate::error::{Error, Result};
use crate::kin::{derive_channels, DeriveConfig, KinematicFrames, TrajectorySeries};
use crate::math::Vec3;
use crate::measures::{classify_phases, PhaseConfig, PhaseSegmentation};
use crate::model::{
    fk_cloud, BodyModel, JointAngles, MarkerCloud, MarkerOffsets, ScaleParams,
};
use crate::solvers::{Marker3DTrial, TrialObservations};

#[derive(Clone, Copy, Debug, Serialize, Deserialize)]
pub struct RigSpec {
    pub n_cameras: usize,
    pub radius_m: f64,
    pub arc_deg: f64,
    pub height_m: f64,
    pub image_size: [u32; 2],
    pub focal_px: f64,
}

impl Default for RigSpec {
    fn default() -> Self {
        // Five cameras on a half circle in front of the subject, webcam-like
        // optics.
        RigSpec {
            n_cameras: 5,
            radius_m: 2.5,
            arc_deg: 180.0,
            height_m: 1.2,
            image_size: [1920, 1080],
            focal_px: 1400.0,
        }
    }
}

#[derive(Clone, Copy, Debug, Serialize, Deserialize)]
pub struct NoiseSpec {
    /// Gaussian pixel noise on keypoints.
    pub pixel_sigma: f64,
    /// Probability of dropping a keypoint observation.
    pub dropout: f64,
    /// Confidence assigned to kept keypoints: uniform in this range.
    pub confidence_range: (f64, f64),
    /// Gaussian noise on 3D marker positions, meters.
    pub marker_sigma_m: f64,
}

impl Default for NoiseSpec {
    fn default() -> Self {
        NoiseSpec {
            pixel_sigma: 0.0,
            dropout: 0.0,
            confidence_range: (0.8, 1.0),
            marker_sigma_m: 0.0,
        }
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct SyntheticScenario {
    pub seed: u64,
    pub duration_s: f64,
    pub video_rate_hz: f64,
    pub marker_rate_hz: f64,
    pub rig: RigSpec,
    pub noise: NoiseSpec,
    /// Scale factors drawn uniformly from this range per segment.
    pub scale_range: (f64, f64),
}

impl Default for SyntheticScenario {
    fn default() -> Self {
        SyntheticScenario {
            seed: 0,
            duration_s: 5.0,
            video_rate_hz: 60.0,
            marker_rate_hz: 100.0,
            rig: RigSpec::default(),
            noise: NoiseSpec::default(),
            scale_range: (0.95, 1.08),
        }
    }
}

impl SyntheticScenario {
    pub fn validate(&self) -> Result<()> {
        if self.duration_s <= 0.0 {
            return Err(Error::Config("duration must be positive".into()));
        }
        if self.rig.n_cameras == 0 {
            return Err(Error::Config("need at least one camera".into()));
        }
        if !(0.0..=1.0).contains(&self.noise.dropout) {
            return Err(Error::Config("dropout must be a probability".into()));
        }
        Ok(())
    }

    pub fn build_rig(&self) -> CameraRig {
        arc_rig(
            self.rig.n_cameras,
            self.rig.radius_m,
            self.rig.arc_deg,
            self.rig.height_m,
            [0.0, 0.0, 0.8],
            self.rig.image_size,
            self.rig.focal_px,
        )
    }
}

/// Piecewise minimum-jerk trajectory through keyframes: C^2, zero velocity
/// and acceleration at every knot.
#[derive(Clone, Debug)]
pub struct KeyframedTrajectory {
    /// (time_s, pose) knots, strictly increasing in time.
    pub knots: Vec<(f64, Vec<f64>)>,
}

impl KeyframedTrajectory {
    pub fn eval(&self, t: f64) -> Vec<f64> {
        let n = self.knots.len();
        if t <= self.knots[0].0 {
            return self.knots[0].1.clone();
        }
        if t >= self.knots[n - 1].0 {
            return self.knots[n - 1].1.clone();
        }
        let k = self
            .knots
            .windows(2)
            .position(|w| t >= w[0].0 && t < w[1].0)
            .unwrap();
        let (t0, ref a) = self.knots[k];
        let (t1, ref b) = self.knots[k + 1];
        let tau = (t - t0) / (t1 - t0);
        let s = 10.0 * tau.powi(3) - 15.0 * tau.powi(4) + 6.0 * tau.powi(5);
        a.iter().zip(b).map(|(x, y)| x + (y - x) * s).collect()
    }
}

/// Everything a validation run needs to know about one generated trial.
#[derive(Clone, Debug)]
pub struct GroundTruth {
    pub trajectory: KeyframedTrajectory,
    /// Joint angles sampled at the video rate.
    pub theta: Vec<Vec<f64>>,
    pub rate_hz: f64,
    pub scale: ScaleParams,
    pub offsets: MarkerOffsets,
    pub series: TrajectorySeries,
    pub phases: PhaseSegmentation,
    pub arm: Arm,
}

struct PoseBuilder<'m> {
    model: &'m BodyModel,
    pose: Vec<f64>,
}

impl<'m> PoseBuilder<'m> {
    fn new(model: &'m BodyModel) -> Self {
        PoseBuilder {
            model,
            pose: vec![0.0; model.n_dofs()],
        }
    }

    fn set(&mut self, name: &str, deg_or_m: f64, angular: bool) -> &mut Self {
        if let Some(i) = self.model.dof_index(name) {
            self.pose[i] = if angular { deg_or_m.to_radians() } else { deg_or_m };
        }
        self
    }

    fn build(&self) -> Vec<f64> {
        self.pose.clone()
    }
}

fn rest_pose(model: &BodyModel, side: char, jitter: &mut impl FnMut() -> f64) -> Vec<f64> {
    let mut b = PoseBuilder::new(model);
    for s in ['r', 'l'] {
        if model.dof_index(&format!("shoulder_flexion_{s}")).is_none() {
            continue;
        }
        let j = if s == side { 1.0 } else { 0.35 };
        b.set(&format!("shoulder_flexion_{s}"), 6.0 + j * jitter(), true)
            .set(&format!("shoulder_abduction_{s}"), 9.0 + j * jitter(), true)
            .set(&format!("shoulder_rotation_{s}"), 0.0 + j * jitter(), true)
            .set(&format!("elbow_flexion_{s}"), 70.0 + j * jitter(), true)
            .set(&format!("elbow_pronation_{s}"), -12.0 + j * jitter(), true)
            .set(&format!("wrist_flexion_{s}"), 0.0 + j * jitter(), true)
            .set(&format!("wrist_deviation_{s}"), 0.0, true);
    }
    b.build()
}

fn grasp_pose(model: &BodyModel, side: char, jitter: &mut impl FnMut() -> f64) -> Vec<f64> {
    let mut pose = rest_pose(model, side, jitter);
    let mut b = PoseBuilder {
        model,
        pose: std::mem::take(&mut pose),
    };
    b.set(&format!("shoulder_flexion_{side}"), 42.0 + jitter(), true)
        .set(&format!("shoulder_abduction_{side}"), 14.0 + jitter(), true)
        .set(&format!("shoulder_rotation_{side}"), 6.0 + jitter(), true)
        .set(&format!("elbow_flexion_{side}"), 32.0 + jitter(), true)
        .set(&format!("elbow_pronation_{side}"), -30.0 + jitter(), true)
        .set(&format!("wrist_flexion_{side}"), -10.0 + jitter(), true)
        .set(&format!("wrist_deviation_{side}"), 5.0, true)
        .set("trunk_tx", 0.035, false)
        .set("trunk_ry", 6.0 + 0.5 * jitter(), true);
    b.build()
}

fn drink_pose(model: &BodyModel, side: char, jitter: &mut impl FnMut() -> f64) -> Vec<f64> {
    let mut pose = rest_pose(model, side, jitter);
    let mut b = PoseBuilder {
        model,
        pose: std::mem::take(&mut pose),
    };
    b.set(&format!("shoulder_flexion_{side}"), 58.0 + jitter(), true)
        .set(&format!("shoulder_abduction_{side}"), 17.0 + jitter(), true)
        .set(&format!("shoulder_rotation_{side}"), 12.0 + jitter(), true)
        .set(&format!("elbow_flexion_{side}"), 118.0 + jitter(), true)
        .set(&format!("elbow_pronation_{side}"), 18.0 + jitter(), true)
        .set(&format!("wrist_flexion_{side}"), 12.0 + jitter(), true)
        .set(&format!("wrist_deviation_{side}"), -4.0, true)
        .set("trunk_tx", 0.018, false)
        .set("trunk_ry", 3.0 + 0.4 * jitter(), true);
    b.build()
}

/// Generate one trial's ground truth: a C^2 drinking cycle (rest, reach,
/// grasp hold, to mouth, drink hold, back, release hold, return, rest) plus
/// the derived kinematic series and phase segmentation. Deterministic per
/// (scenario, trial index).
pub fn generate_trajectory(
    model: &BodyModel,
    scenario: &SyntheticScenario,
    trial_index: usize,
    side: char,
    arm: Arm,
) -> Result<GroundTruth> {
    scenario.validate()?;
    let mut rng = ChaCha20Rng::seed_from_u64(
        scenario.seed ^ (0x9e37_79b9_7f4a_7c15u64.wrapping_mul(trial_index as u64 + 1)),
    );
    let mut jitter = {
        let mut r = ChaCha20Rng::seed_from_u64(rng.gen());
        move || r.gen_range(-2.5..2.5)
    };

    let d = scenario.duration_s;
    // Segment fractions of the full cycle; the lead-in rest doubles as the
    // static scaling window for the two-stage baseline.
    let lead = 0.13 * d;
    let reach = 0.14 * d;
    let hold1 = 0.05 * d;
    let forward = 0.14 * d;
    let drink = 0.16 * d;
    let back = 0.14 * d;
    let hold2 = 0.05 * d;
    let ret = 0.14 * d;

    let p_rest = rest_pose(model, side, &mut jitter);
    let p_grasp = grasp_pose(model, side, &mut jitter);
    let p_drink = drink_pose(model, side, &mut jitter);
    let mut p_back = grasp_pose(model, side, &mut jitter);
    // Returning to the table is never bit-identical to the grasp pose.
    if let Some(i) = model.dof_index(&format!("shoulder_flexion_{side}")) {
        p_back[i] += 1.0f64.to_radians() * (trial_index as f64 % 3.0 - 1.0);
    }
    // Ending exactly at the starting rest pose keeps edge-clamped shifts
    // mean-preserving, which the compare pipeline's exact bias recovery
    // relies on.
    let p_end = p_rest.clone();

    let mut t = 0.0;
    let mut knots = vec![(t, p_rest.clone())];
    t += lead;
    knots.push((t, p_rest.clone()));
    t += reach;
    knots.push((t, p_grasp.clone()));
    t += hold1;
    knots.push((t, p_grasp.clone()));
    t += forward;
    knots.push((t, p_drink.clone()));
    t += drink;
    knots.push((t, p_drink.clone()));
    t += back;
    knots.push((t, p_back.clone()));
    t += hold2;
    knots.push((t, p_back.clone()));
    t += ret;
    knots.push((t, p_end.clone()));
    knots.push((d, p_end.clone()));

    let trajectory = KeyframedTrajectory { knots };

    // Validate limits at the knots (blends stay between endpoints).
    let limits = model.dof_limits();
    for (_, pose) in &trajectory.knots {
        for (v, (lo, hi)) in pose.iter().zip(&limits) {
            if v < lo || v > hi {
                return Err(Error::Config(format!(
                    "generated pose violates limits: {v} not in [{lo}, {hi}]"
                )));
            }
        }
    }

    let n_frames = (d * scenario.video_rate_hz).round() as usize;
    let theta: Vec<Vec<f64>> = (0..n_frames)
        .map(|f| trajectory.eval(f as f64 / scenario.video_rate_hz))
        .collect();

    let scale = ScaleParams(
        (0..model.n_segments())
            .map(|_| rng.gen_range(scenario.scale_range.0..scenario.scale_range.1))
            .collect(),
    );
    let offsets = MarkerOffsets::zero(model);

    let markers: Vec<MarkerCloud> = theta
        .iter()
        .map(|th| fk_cloud(model, &scale, &offsets, &JointAngles(th.clone())))
        .collect::<Result<_>>()?;
    let series = derive_channels(
        model,
        side,
        &KinematicFrames {
            theta: &theta,
            markers: &markers,
            rate_hz: scenario.video_rate_hz,
        },
        &DeriveConfig::default(),
    )?;
    let phases = classify_phases(
        series.channel(crate::kin::ChannelId::EndEffectorVelocity)?,
        scenario.video_rate_hz,
        &PhaseConfig::default(),
    )?;

    Ok(GroundTruth {
        trajectory,
        theta,
        rate_hz: scenario.video_rate_hz,
        scale,
        offsets,
        series,
        phases,
        arm,
    })
}

/// Render a ground-truth trial into per-camera 2D observations (video rate)
/// and a 3D marker track (marker rate), applying the scenario's noise model.
pub fn render_observations(
    model: &BodyModel,
    truth: &GroundTruth,
    rig: &CameraRig,
    scenario: &SyntheticScenario,
    trial_id: &str,
) -> Result<(TrialObservations, Marker3DTrial)> {
    let mut rng = ChaCha20Rng::seed_from_u64(
        scenario.seed ^ 0xd1b5_4a32_d192_ed03 ^ hash_str(trial_id),
    );
    let noise = &scenario.noise;
    let n_frames = truth.theta.len();

    let mut frames = Vec::with_capacity(n_frames);
    for th in &truth.theta {
        let cloud = fk_cloud(model, &truth.scale, &truth.offsets, &JointAngles(th.clone()))?;
        let mut per_camera = Vec::with_capacity(rig.len());
        for cam in &rig.cameras {
            let mut obs_row = Vec::with_capacity(model.n_markers());
            for p in &cloud.0 {
                let p = p.expect("fk clouds are complete");
                let keep = rng.gen::<f64>() >= noise.dropout;
                let du: f64 = sample_gauss(&mut rng) * noise.pixel_sigma;
                let dv: f64 = sample_gauss(&mut rng) * noise.pixel_sigma;
                let conf = rng.gen_range(noise.confidence_range.0..=noise.confidence_range.1);
                if !keep {
                    obs_row.push(None);
                    continue;
                }
                match project(&cam.intrinsics, &cam.extrinsics, Vec3::new(p[0], p[1], p[2])) {
                    Ok((u, v)) => obs_row.push(Some(Observation2D {
                        u: u + du,
                        v: v + dv,
                        confidence: conf,
                    })),
                    Err(_) => obs_row.push(None),
                }
            }
            per_camera.push(obs_row);
        }
        frames.push(per_camera);
    }

    let n_marker_frames = (scenario.duration_s * scenario.marker_rate_hz).round() as usize;
    let mut clouds = Vec::with_capacity(n_marker_frames);
    for f in 0..n_marker_frames {
        let th = truth.trajectory.eval(f as f64 / scenario.marker_rate_hz);
        let cloud = fk_cloud(model, &truth.scale, &truth.offsets, &JointAngles(th))?;
        let noisy: Vec<Option<[f64; 3]>> = cloud
            .0
            .into_iter()
            .map(|p| {
                let mut p = p.unwrap();
                for c in p.iter_mut() {
                    *c += sample_gauss(&mut rng) * noise.marker_sigma_m;
                }
                Some(p)
            })
            .collect();
        clouds.push(MarkerCloud(noisy));
    }

    Ok((
        TrialObservations {
            trial_id: trial_id.to_string(),
            arm: truth.arm,
            rate_hz: truth.rate_hz,
            frames,
        },
        Marker3DTrial {
            rate_hz: scenario.marker_rate_hz,
            frames: clouds,
        },
    ))
}

fn sample_gauss(rng: &mut impl Rng) -> f64 {
    // Box-Muller; two uniforms per draw keeps the stream simple and seeded.
    let u1: f64 = rng.gen_range(f64::EPSILON..1.0);
    let u2: f64 = rng.gen_range(0.0..1.0);
    (-2.0 * u1.ln()).sqrt() * (std::f64::consts::TAU * u2).cos()
}

fn hash_str(s: &str) -> u64 {
    // FNV-1a, enough to decorrelate per-trial noise streams.
    let mut h = 0xcbf2_9ce4_8422_2325u64;
    for b in s.bytes() {
        h ^= b as u64;
        h = h.wrapping_mul(0x0000_0100_0000_01b3);
    }
    h
}

/// Corrupt a series: add a constant bias, shift content by `lag_samples`
/// (positive lag makes the output lead the original, so the compare pipeline
/// reports `+lag` when comparing corrupted vs original), and add seeded white
/// noise. Out-of-range source samples clamp to the series edges.
pub fn corrupt(
    series: &TrajectorySeries,
    bias: f64,
    lag_samples: i64,
    noise_sigma: f64,
    seed: u64,
) -> Result<TrajectorySeries> {
    let max_lag = (0.25 * series.rate_hz).round() as i64;
    if lag_samples.abs() > max_lag {
        return Err(Error::LagTooLarge {
            got: lag_samples,
            max: max_lag,
        });
    }
    let mut rng = ChaCha20Rng::seed_from_u64(seed);
    let n = series.len() as i64;
    let mut out = TrajectorySeries::new(series.rate_hz, series.t0_s);
    for (id, values) in &series.channels {
        let corrupted: Vec<f64> = (0..n)
            .map(|i| {
                let src = (i + lag_samples).clamp(0, n - 1) as usize;
                values[src] + bias + sample_gauss(&mut rng) * noise_sigma
            })
            .collect();
        out.insert(*id, corrupted);
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::kin::ChannelId;
    use crate::measures::{count_movement_units, MovementUnitConfig, Phase};
    use crate::model::{build_default_upper_body, Side};

    fn scenario() -> SyntheticScenario {
        SyntheticScenario::default()
    }

    #[test]
    fn generation_is_bit_deterministic() {
        let model = build_default_upper_body(Side::Bilateral);
        let a = generate_trajectory(&model, &scenario(), 0, 'r', Arm::Affected).unwrap();
        let b = generate_trajectory(&model, &scenario(), 0, 'r', Arm::Affected).unwrap();
        assert_eq!(a.theta, b.theta);
        assert_eq!(a.scale.0, b.scale.0);
        assert_eq!(a.series, b.series);
    }

    #[test]
    fn trials_differ_across_indices() {
        let model = build_default_upper_body(Side::Bilateral);
        let a = generate_trajectory(&model, &scenario(), 0, 'r', Arm::Affected).unwrap();
        let b = generate_trajectory(&model, &scenario(), 1, 'r', Arm::Affected).unwrap();
        assert_ne!(a.theta, b.theta);
    }

    #[test]
    fn velocity_profile_has_four_bouts_and_plateau() {
        let model = build_default_upper_body(Side::Bilateral);
        let t = generate_trajectory(&model, &scenario(), 0, 'r', Arm::Affected).unwrap();
        let eev = t.series.channel(ChannelId::EndEffectorVelocity).unwrap();
        let units = count_movement_units(eev, t.rate_hz, &MovementUnitConfig::default());
        assert!(units >= 4, "expected >= 4 prominent peaks, got {units}");
        let (ds, de) = t.phases.span(Phase::Drinking).unwrap();
        assert!((de - ds) as f64 / t.rate_hz > 0.4, "drink plateau too short");
        let quiet = eev[ds..de].iter().cloned().fold(0.0f64, f64::max);
        assert!(quiet < 0.15, "drink plateau not quiet: {quiet}");
    }

    #[test]
    fn generated_angles_respect_limits() {
        let model = build_default_upper_body(Side::Bilateral);
        let t = generate_trajectory(&model, &scenario(), 2, 'r', Arm::Unaffected).unwrap();
        let limits = model.dof_limits();
        for th in &t.theta {
            for (v, (lo, hi)) in th.iter().zip(&limits) {
                assert!(v >= lo && v <= hi);
            }
        }
    }

    #[test]
    fn noise_free_render_triangulates_back() {
        use crate::camera::{triangulate, DEFAULT_CONFIDENCE_FLOOR};
        let model = build_default_upper_body(Side::Bilateral);
        let sc = scenario();
        let truth = generate_trajectory(&model, &sc, 0, 'r', Arm::Affected).unwrap();
        let rig = sc.build_rig();
        let (obs, _) = render_observations(&model, &truth, &rig, &sc, "t0").unwrap();
        let cloud = fk_cloud(
            &model,
            &truth.scale,
            &truth.offsets,
            &JointAngles(truth.theta[40].clone()),
        )
        .unwrap();
        for (mi, expected) in cloud.0.iter().enumerate() {
            let per_cam: Vec<Option<Observation2D>> = obs.frames[40]
                .iter()
                .map(|row| row[mi])
                .collect();
            let tri = triangulate(&rig, &per_cam, 2, DEFAULT_CONFIDENCE_FLOOR).unwrap();
            let e = expected.unwrap();
            let err = (0..3)
                .map(|k| (tri.point[k] - e[k]).powi(2))
                .sum::<f64>()
                .sqrt();
            assert!(err < 1e-6, "marker {mi}: {err}");
        }
    }

    #[test]
    fn pixel_noise_statistics_match_sigma() {
        let model = build_default_upper_body(Side::Right);
        let mut sc = scenario();
        sc.noise.pixel_sigma = 1.0;
        let truth = generate_trajectory(&model, &sc, 0, 'r', Arm::Affected).unwrap();
        let rig = sc.build_rig();
        let (noisy, _) = render_observations(&model, &truth, &rig, &sc, "t0").unwrap();
        let mut clean_sc = sc.clone();
        clean_sc.noise.pixel_sigma = 0.0;
        let (clean, _) = render_observations(&model, &truth, &rig, &clean_sc, "t0").unwrap();

        let mut sq = 0.0;
        let mut n = 0usize;
        for (fa, fb) in noisy.frames.iter().zip(&clean.frames) {
            for (ca, cb) in fa.iter().zip(fb) {
                for (oa, ob) in ca.iter().zip(cb) {
                    if let (Some(a), Some(b)) = (oa, ob) {
                        sq += (a.u - b.u).powi(2) + (a.v - b.v).powi(2);
                        n += 2;
                    }
                }
            }
        }
        assert!(n > 10_000);
        let std = (sq / n as f64).sqrt();
        assert!((std - 1.0).abs() < 0.05, "empirical sigma {std}");
    }

    #[test]
    fn full_dropout_of_one_camera_removes_its_observations() {
        let model = build_default_upper_body(Side::Right);
        let sc = scenario();
        let truth = generate_trajectory(&model, &sc, 0, 'r', Arm::Affected).unwrap();
        let mut rig = sc.build_rig();
        // Knock out one camera by pointing it away (all projections fail).
        rig.cameras[2].extrinsics.translation = [0.0, 0.0, -50.0];
        let (obs, _) = render_observations(&model, &truth, &rig, &sc, "t0").unwrap();
        for frame in &obs.frames {
            assert!(frame[2].iter().all(|o| o.is_none()));
        }
    }

    #[test]
    fn corrupt_zero_is_identity_and_seeded() {
        let model = build_default_upper_body(Side::Right);
        let truth = generate_trajectory(&model, &scenario(), 0, 'r', Arm::Affected).unwrap();
        let same = corrupt(&truth.series, 0.0, 0, 0.0, 1).unwrap();
        assert_eq!(same, truth.series);
        let n1 = corrupt(&truth.series, 0.0, 0, 0.5, 7).unwrap();
        let n2 = corrupt(&truth.series, 0.0, 0, 0.5, 7).unwrap();
        assert_eq!(n1, n2);
        let n3 = corrupt(&truth.series, 0.0, 0, 0.5, 8).unwrap();
        assert_ne!(n1, n3);
    }

    #[test]
    fn corrupt_rejects_excessive_lag() {
        let model = build_default_upper_body(Side::Right);
        let truth = generate_trajectory(&model, &scenario(), 0, 'r', Arm::Affected).unwrap();
        // 0.25 s at 60 Hz is 15 samples.
        assert!(corrupt(&truth.series, 0.0, 16, 0.0, 1).is_err());
        assert!(corrupt(&truth.series, 0.0, -15, 0.0, 1).is_ok());
    }

    #[test]
    fn compare_pipeline_recovers_bias_and_lag() {
        use crate::compare::compare_channel;
        let model = build_default_upper_body(Side::Right);
        let truth = generate_trajectory(&model, &scenario(), 0, 'r', Arm::Affected).unwrap();
        let x = truth.series.channel(ChannelId::ShoulderFlexion).unwrap();
        let corrupted = corrupt(&truth.series, 5.0, 2, 0.0, 3).unwrap();
        let y = corrupted.channel(ChannelId::ShoulderFlexion).unwrap();
        let result =
            compare_channel(ChannelId::ShoulderFlexion, y, x, truth.rate_hz, 0.25).unwrap();
        assert!((result.bias - 5.0).abs() < 1e-12, "bias {}", result.bias);
        assert!(
            (result.lag_s - 2.0 / truth.rate_hz).abs() < 1e-12,
            "lag {}",
            result.lag_s
        );
    }
}
