//! Kinematic trajectory derivation: the six drinking-task channels,
//! zero-phase low-pass filtering, differentiation, and resampling.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{BodyModel, MarkerCloud};

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ChannelId {
    ShoulderFlexion,
    ShoulderAbduction,
    ElbowFlexion,
    ElbowAngularVelocity,
    EndEffectorVelocity,
    TrunkDisplacement,
}

impl ChannelId {
    pub const ALL: [ChannelId; 6] = [
        ChannelId::ShoulderFlexion,
        ChannelId::ShoulderAbduction,
        ChannelId::ElbowFlexion,
        ChannelId::ElbowAngularVelocity,
        ChannelId::EndEffectorVelocity,
        ChannelId::TrunkDisplacement,
    ];

    pub fn unit(self) -> &'static str {
        match self {
            ChannelId::ShoulderFlexion | ChannelId::ShoulderAbduction | ChannelId::ElbowFlexion => {
                "deg"
            }
            ChannelId::ElbowAngularVelocity => "deg_s",
            ChannelId::EndEffectorVelocity => "m_s",
            ChannelId::TrunkDisplacement => "mm",
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            ChannelId::ShoulderFlexion => "shoulder_flexion",
            ChannelId::ShoulderAbduction => "shoulder_abduction",
            ChannelId::ElbowFlexion => "elbow_flexion",
            ChannelId::ElbowAngularVelocity => "elbow_angular_velocity",
            ChannelId::EndEffectorVelocity => "end_effector_velocity",
            ChannelId::TrunkDisplacement => "trunk_displacement",
        }
    }

    pub fn parse(s: &str) -> Option<ChannelId> {
        Self::ALL.iter().copied().find(|c| c.name() == s)
    }
}

/// Uniformly sampled multichannel kinematic series.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrajectorySeries {
    pub rate_hz: f64,
    pub t0_s: f64,
    pub channels: BTreeMap<ChannelId, Vec<f64>>,
}

impl TrajectorySeries {
    pub fn new(rate_hz: f64, t0_s: f64) -> Self {
        TrajectorySeries {
            rate_hz,
            t0_s,
            channels: BTreeMap::new(),
        }
    }

    pub fn len(&self) -> usize {
        self.channels.values().next().map_or(0, |v| v.len())
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn channel(&self, id: ChannelId) -> Result<&[f64]> {
        self.channels
            .get(&id)
            .map(|v| v.as_slice())
            .ok_or(Error::MissingChannel(id.name()))
    }

    pub fn insert(&mut self, id: ChannelId, values: Vec<f64>) {
        self.channels.insert(id, values);
    }

    pub fn validate(&self) -> Result<()> {
        let n = self.len();
        if self.rate_hz <= 0.0 {
            return Err(Error::Config("series rate must be positive".into()));
        }
        for (id, v) in &self.channels {
            if v.len() != n {
                return Err(Error::DimensionMismatch {
                    context: "series channel length",
                    expected: n,
                    got: v.len(),
                });
            }
            if v.iter().any(|x| !x.is_finite()) {
                return Err(Error::Config(format!("non-finite sample in {}", id.name())));
            }
        }
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, Serialize, Deserialize)]
pub struct DeriveConfig {
    /// Zero-phase Butterworth cutoff for velocity channels, Hz.
    pub cutoff_hz: f64,
    /// Initial rest window defining the trunk baseline, seconds.
    pub baseline_window_s: f64,
}

impl Default for DeriveConfig {
    fn default() -> Self {
        DeriveConfig {
            cutoff_hz: 10.0,
            baseline_window_s: 0.3,
        }
    }
}

/// Central differences with one-sided endpoints, in units per second.
pub fn central_diff(x: &[f64], rate_hz: f64) -> Vec<f64> {
    let n = x.len();
    let mut v = vec![0.0; n];
    if n < 2 {
        return v;
    }
    v[0] = (x[1] - x[0]) * rate_hz;
    v[n - 1] = (x[n - 1] - x[n - 2]) * rate_hz;
    for i in 1..n - 1 {
        v[i] = (x[i + 1] - x[i - 1]) * 0.5 * rate_hz;
    }
    v
}

/// Second-order Butterworth low-pass, applied forward and backward
/// (zero-phase) with odd-reflection edge padding.
pub fn lowpass_zero_phase(x: &[f64], rate_hz: f64, cutoff_hz: f64) -> Vec<f64> {
    let n = x.len();
    if n < 3 || cutoff_hz <= 0.0 || cutoff_hz >= rate_hz / 2.0 {
        return x.to_vec();
    }
    let c = 1.0 / (std::f64::consts::PI * cutoff_hz / rate_hz).tan();
    let norm = 1.0 / (1.0 + std::f64::consts::SQRT_2 * c + c * c);
    let b0 = norm;
    let b1 = 2.0 * norm;
    let b2 = norm;
    let a1 = 2.0 * (1.0 - c * c) * norm;
    let a2 = (1.0 - std::f64::consts::SQRT_2 * c + c * c) * norm;

    let pad = (n - 1).min(12.max((3.0 * rate_hz / cutoff_hz) as usize));
    let mut ext = Vec::with_capacity(n + 2 * pad);
    for i in (1..=pad).rev() {
        ext.push(2.0 * x[0] - x[i]);
    }
    ext.extend_from_slice(x);
    for i in 1..=pad {
        ext.push(2.0 * x[n - 1] - x[n - 1 - i]);
    }

    let run = |input: &[f64]| -> Vec<f64> {
        let mut y = vec![0.0; input.len()];
        let (mut x1, mut x2) = (input[0], input[0]);
        let (mut y1, mut y2) = (input[0], input[0]);
        for (i, &xi) in input.iter().enumerate() {
            let yi = b0 * xi + b1 * x1 + b2 * x2 - a1 * y1 - a2 * y2;
            y[i] = yi;
            x2 = x1;
            x1 = xi;
            y2 = y1;
            y1 = yi;
        }
        y
    };

    let mut y = run(&ext);
    y.reverse();
    let mut y = run(&y);
    y.reverse();
    y[pad..pad + n].to_vec()
}

/// Per-frame solver output handed to channel derivation: joint angles plus
/// the forward-kinematics marker positions they imply.
pub struct KinematicFrames<'a> {
    pub theta: &'a [Vec<f64>],
    pub markers: &'a [MarkerCloud],
    pub rate_hz: f64,
}

/// Derive the six drinking-task channels for one arm.
///
/// Angle channels read directly from the angle vector (degrees). Elbow
/// angular velocity and end-effector velocity come from central differences
/// (of the elbow angle and the hand marker position), low-pass filtered.
/// Trunk displacement is the distance of the sternum marker from its mean
/// over the initial rest window, in millimeters.
pub fn derive_channels(
    model: &BodyModel,
    side: char,
    frames: &KinematicFrames<'_>,
    cfg: &DeriveConfig,
) -> Result<TrajectorySeries> {
    let n = frames.theta.len();
    if n < 5 {
        return Err(Error::TooShort { needed: 5, got: n });
    }
    if frames.markers.len() != n {
        return Err(Error::DimensionMismatch {
            context: "marker frames",
            expected: n,
            got: frames.markers.len(),
        });
    }
    let dof = |name: String| {
        model
            .dof_index(&name)
            .ok_or(Error::MissingChannel("joint angle"))
    };
    let flex = dof(format!("shoulder_flexion_{side}"))?;
    let abd = dof(format!("shoulder_abduction_{side}"))?;
    let elbow = dof(format!("elbow_flexion_{side}"))?;
    let hand = model
        .marker_index(&format!("hand_{side}"))
        .ok_or(Error::MissingChannel("hand marker"))?;
    let sternum = model
        .marker_index("sternum")
        .ok_or(Error::MissingChannel("sternum marker"))?;

    let pick = |idx: usize| -> Vec<f64> {
        frames
            .theta
            .iter()
            .map(|t| t[idx].to_degrees())
            .collect()
    };
    let shoulder_flexion = pick(flex);
    let shoulder_abduction = pick(abd);
    let elbow_flexion = pick(elbow);

    let elbow_vel = lowpass_zero_phase(
        &central_diff(&elbow_flexion, frames.rate_hz),
        frames.rate_hz,
        cfg.cutoff_hz,
    );

    let marker_track = |idx: usize| -> Result<[Vec<f64>; 3]> {
        let mut xyz = [
            Vec::with_capacity(n),
            Vec::with_capacity(n),
            Vec::with_capacity(n),
        ];
        for cloud in frames.markers {
            let p = cloud.0[idx].ok_or(Error::MissingChannel("marker position"))?;
            for k in 0..3 {
                xyz[k].push(p[k]);
            }
        }
        Ok(xyz)
    };

    let hand_xyz = marker_track(hand)?;
    let vel_components: Vec<Vec<f64>> = hand_xyz
        .iter()
        .map(|c| {
            lowpass_zero_phase(
                &central_diff(c, frames.rate_hz),
                frames.rate_hz,
                cfg.cutoff_hz,
            )
        })
        .collect();
    let eev: Vec<f64> = (0..n)
        .map(|i| {
            (vel_components[0][i].powi(2)
                + vel_components[1][i].powi(2)
                + vel_components[2][i].powi(2))
            .sqrt()
        })
        .collect();

    let sternum_xyz = marker_track(sternum)?;
    let baseline_n = ((cfg.baseline_window_s * frames.rate_hz).round() as usize)
        .clamp(1, n);
    let baseline: Vec<f64> = (0..3)
        .map(|k| sternum_xyz[k][..baseline_n].iter().sum::<f64>() / baseline_n as f64)
        .collect();
    let trunk: Vec<f64> = (0..n)
        .map(|i| {
            1000.0
                * ((sternum_xyz[0][i] - baseline[0]).powi(2)
                    + (sternum_xyz[1][i] - baseline[1]).powi(2)
                    + (sternum_xyz[2][i] - baseline[2]).powi(2))
                .sqrt()
        })
        .collect();

    let mut series = TrajectorySeries::new(frames.rate_hz, 0.0);
    series.insert(ChannelId::ShoulderFlexion, shoulder_flexion);
    series.insert(ChannelId::ShoulderAbduction, shoulder_abduction);
    series.insert(ChannelId::ElbowFlexion, elbow_flexion);
    series.insert(ChannelId::ElbowAngularVelocity, elbow_vel);
    series.insert(ChannelId::EndEffectorVelocity, eev);
    series.insert(ChannelId::TrunkDisplacement, trunk);
    series.validate()?;
    Ok(series)
}

/// Cubic (Catmull-Rom) interpolation of one uniformly sampled channel at an
/// arbitrary in-span time offset, in samples.
fn interp_channel(x: &[f64], s: f64) -> f64 {
    let n = x.len();
    let i = s.floor() as isize;
    let u = s - i as f64;
    if u.abs() < 1e-9 {
        return x[(i.clamp(0, n as isize - 1)) as usize];
    }
    let at = |j: isize| x[j.clamp(0, n as isize - 1) as usize];
    let (p0, p1, p2, p3) = (at(i - 1), at(i), at(i + 1), at(i + 2));
    let m1 = (p2 - p0) * 0.5;
    let m2 = (p3 - p1) * 0.5;
    let u2 = u * u;
    let u3 = u2 * u;
    (2.0 * u3 - 3.0 * u2 + 1.0) * p1
        + (u3 - 2.0 * u2 + u) * m1
        + (-2.0 * u3 + 3.0 * u2) * p2
        + (u3 - u2) * m2
}

/// Resample every channel to `target_rate`.
///
/// Output timestamps start at `t0` and step by `1/target_rate`, including
/// `t0` and excluding anything beyond the last input time (2 s at 100 Hz,
/// i.e. 201 samples, resampled to 60 Hz gives 121 samples).
pub fn resample(series: &TrajectorySeries, target_rate: f64) -> Result<TrajectorySeries> {
    if target_rate <= 0.0 {
        return Err(Error::Config("target rate must be positive".into()));
    }
    let n = series.len();
    if n == 0 {
        return Ok(TrajectorySeries::new(target_rate, series.t0_s));
    }
    let duration = (n - 1) as f64 / series.rate_hz;
    let n_out = (duration * target_rate + 1e-9).floor() as usize + 1;
    let mut out = TrajectorySeries::new(target_rate, series.t0_s);
    for (id, values) in &series.channels {
        let resampled: Vec<f64> = (0..n_out)
            .map(|k| {
                let t = k as f64 / target_rate;
                interp_channel(values, t * series.rate_hz)
            })
            .collect();
        out.insert(*id, resampled);
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{
        build_default_upper_body, fk_cloud, JointAngles, MarkerOffsets, ScaleParams, Side,
    };
    use approx::assert_relative_eq;
    use proptest::prelude::*;

    fn static_frames(n: usize, rate: f64) -> (Vec<Vec<f64>>, Vec<MarkerCloud>) {
        let m = build_default_upper_body(Side::Right);
        let theta = JointAngles::zeros(&m);
        let cloud = fk_cloud(
            &m,
            &ScaleParams::identity(&m),
            &MarkerOffsets::zero(&m),
            &theta,
        )
        .unwrap();
        let _ = rate;
        (vec![theta.0; n], vec![cloud; n])
    }

    #[test]
    fn static_pose_has_zero_velocity_and_displacement() {
        let m = build_default_upper_body(Side::Right);
        let (theta, markers) = static_frames(120, 60.0);
        let frames = KinematicFrames {
            theta: &theta,
            markers: &markers,
            rate_hz: 60.0,
        };
        let s = derive_channels(&m, 'r', &frames, &DeriveConfig::default()).unwrap();
        for &v in s.channel(ChannelId::EndEffectorVelocity).unwrap() {
            assert!(v.abs() < 1e-12);
        }
        for &v in s.channel(ChannelId::TrunkDisplacement).unwrap() {
            assert!(v.abs() < 1e-9);
        }
    }

    #[test]
    fn too_short_trajectory_is_rejected() {
        let m = build_default_upper_body(Side::Right);
        let (theta, markers) = static_frames(3, 60.0);
        let frames = KinematicFrames {
            theta: &theta,
            markers: &markers,
            rate_hz: 60.0,
        };
        assert!(matches!(
            derive_channels(&m, 'r', &frames, &DeriveConfig::default()),
            Err(Error::TooShort { .. })
        ));
    }

    #[test]
    fn linear_hand_motion_gives_constant_speed() {
        let m = build_default_upper_body(Side::Right);
        let rate = 60.0;
        let n = 180;
        let hand = m.marker_index("hand_r").unwrap();
        let (theta, mut markers) = static_frames(n, rate);
        for (i, cloud) in markers.iter_mut().enumerate() {
            let p = cloud.0[hand].as_mut().unwrap();
            p[0] += 0.5 * i as f64 / rate; // 0.5 m/s along x
        }
        let frames = KinematicFrames {
            theta: &theta,
            markers: &markers,
            rate_hz: rate,
        };
        let s = derive_channels(&m, 'r', &frames, &DeriveConfig::default()).unwrap();
        let eev = s.channel(ChannelId::EndEffectorVelocity).unwrap();
        for &v in &eev[20..n - 20] {
            assert_relative_eq!(v, 0.5, max_relative = 1e-9);
        }
    }

    #[test]
    fn sine_elbow_angular_velocity_amplitude() {
        // elbow angle = A sin(2 pi f t) -> angular velocity amplitude 2 pi f A,
        // within 2% after filtering at cutoff >= 5 f.
        let m = build_default_upper_body(Side::Right);
        let rate = 100.0;
        let f = 1.0;
        let a_deg: f64 = 20.0;
        let n = 400;
        let elbow = m.dof_index("elbow_flexion_r").unwrap();
        let (mut theta, markers) = static_frames(n, rate);
        for (i, t) in theta.iter_mut().enumerate() {
            t[elbow] = (a_deg.to_radians()) * (std::f64::consts::TAU * f * i as f64 / rate).sin()
                + 0.8;
        }
        let frames = KinematicFrames {
            theta: &theta,
            markers: &markers,
            rate_hz: rate,
        };
        let cfg = DeriveConfig {
            cutoff_hz: 5.0,
            baseline_window_s: 0.3,
        };
        let s = derive_channels(&m, 'r', &frames, &cfg).unwrap();
        let ev = s.channel(ChannelId::ElbowAngularVelocity).unwrap();
        let peak = ev[40..n - 40].iter().fold(0.0f64, |m, &v| m.max(v.abs()));
        let expected = std::f64::consts::TAU * f * a_deg;
        assert!(
            (peak - expected).abs() / expected < 0.02,
            "peak {peak} vs {expected}"
        );
    }

    #[test]
    fn resample_100_to_60_sample_count() {
        let mut s = TrajectorySeries::new(100.0, 0.0);
        // 2 s inclusive of both endpoints: 201 samples.
        s.insert(ChannelId::ElbowFlexion, (0..=200).map(|i| i as f64).collect());
        let r = resample(&s, 60.0).unwrap();
        assert_eq!(r.len(), 121);
    }

    #[test]
    fn resample_same_rate_is_identity() {
        let mut s = TrajectorySeries::new(60.0, 0.0);
        let data: Vec<f64> = (0..100).map(|i| (i as f64 * 0.21).sin()).collect();
        s.insert(ChannelId::ShoulderFlexion, data.clone());
        let r = resample(&s, 60.0).unwrap();
        let out = r.channel(ChannelId::ShoulderFlexion).unwrap();
        assert_eq!(out.len(), data.len());
        for (a, b) in out.iter().zip(&data) {
            assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn resample_bandlimited_sine_is_accurate() {
        let rate_in = 100.0;
        let f = 3.0;
        let n = 301;
        let mut s = TrajectorySeries::new(rate_in, 0.0);
        s.insert(
            ChannelId::ShoulderFlexion,
            (0..n)
                .map(|i| (std::f64::consts::TAU * f * i as f64 / rate_in).sin())
                .collect(),
        );
        let r = resample(&s, 60.0).unwrap();
        let out = r.channel(ChannelId::ShoulderFlexion).unwrap();
        for (k, &v) in out.iter().enumerate() {
            let t = k as f64 / 60.0;
            let expected = (std::f64::consts::TAU * f * t).sin();
            assert!(
                (v - expected).abs() < 1e-3,
                "t={t}: {v} vs {expected}"
            );
        }
    }

    #[test]
    fn integration_of_velocity_recovers_path_length() {
        let m = build_default_upper_body(Side::Right);
        let rate = 60.0;
        let n = 240;
        let hand = m.marker_index("hand_r").unwrap();
        let (theta, mut markers) = static_frames(n, rate);
        // Smooth 1D motion: minimum-jerk-like S-curve over 4 s, 0.4 m.
        let mut true_len = 0.0;
        let mut prev = None;
        for (i, cloud) in markers.iter_mut().enumerate() {
            let tau = i as f64 / (n - 1) as f64;
            let spos = 0.4 * (10.0 * tau.powi(3) - 15.0 * tau.powi(4) + 6.0 * tau.powi(5));
            let p = cloud.0[hand].as_mut().unwrap();
            p[0] += spos;
            if let Some(q) = prev {
                true_len += (spos - q as f64).abs();
            }
            prev = Some(spos);
        }
        let frames = KinematicFrames {
            theta: &theta,
            markers: &markers,
            rate_hz: rate,
        };
        let s = derive_channels(&m, 'r', &frames, &DeriveConfig::default()).unwrap();
        let eev = s.channel(ChannelId::EndEffectorVelocity).unwrap();
        let integrated: f64 = eev.iter().sum::<f64>() / rate;
        assert!(
            (integrated - true_len).abs() / true_len < 0.01,
            "{integrated} vs {true_len}"
        );
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(1000))]
        /// Resampling band-limited signals does not overshoot by more than 2%.
        #[test]
        fn resample_no_overshoot(f1 in 0.3f64..4.0, f2 in 0.3f64..4.0, a2 in 0.0f64..1.0,
                                 up in proptest::bool::ANY) {
            let (rate_in, rate_out) = if up { (60.0, 100.0) } else { (100.0, 60.0) };
            let n = (rate_in * 3.0) as usize;
            let data: Vec<f64> = (0..n)
                .map(|i| {
                    let t = i as f64 / rate_in;
                    (std::f64::consts::TAU * f1 * t).sin()
                        + a2 * (std::f64::consts::TAU * f2 * t).cos()
                })
                .collect();
            let max_in = data.iter().fold(0.0f64, |m, &v| m.max(v.abs()));
            let mut s = TrajectorySeries::new(rate_in, 0.0);
            s.insert(ChannelId::EndEffectorVelocity, data);
            let r = resample(&s, rate_out).unwrap();
            let out = r.channel(ChannelId::EndEffectorVelocity).unwrap();
            let max_out = out.iter().fold(0.0f64, |m, &v| m.max(v.abs()));
            prop_assert!(max_out <= max_in * 1.02 + 1e-12);
            prop_assert_eq!(r.channels.len(), 1);
        }
    }
}
