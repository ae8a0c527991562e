//! Drinking-task phase segmentation and the twelve movement-quality measures.
//!
//! Segmentation finds the four movement bouts (reach, forward-to-mouth, back,
//! return) in the end-effector velocity and partitions the trial into the six
//! canonical phases. The same segmentation is then applied to both systems'
//! series so that measure differences reflect kinematics only.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::kin::{ChannelId, TrajectorySeries};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum Phase {
    Reaching,
    Forward,
    Drinking,
    Back,
    Returning,
    Rest,
}

impl Phase {
    pub const ORDER: [Phase; 6] = [
        Phase::Reaching,
        Phase::Forward,
        Phase::Drinking,
        Phase::Back,
        Phase::Returning,
        Phase::Rest,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Phase::Reaching => "reaching",
            Phase::Forward => "forward",
            Phase::Drinking => "drinking",
            Phase::Back => "back",
            Phase::Returning => "returning",
            Phase::Rest => "rest",
        }
    }
}

/// Contiguous, ordered phase spans covering `[0, n_frames)`.
///
/// Interior boundaries are velocity threshold crossings: the reach span ends
/// at the offset of the first bout, the drinking span runs from the offset of
/// the second bout to the onset of the third, and the trial tail after the
/// fourth bout's offset is rest.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PhaseSegmentation {
    /// `(phase, start_frame, end_frame)` half-open spans.
    pub spans: Vec<(Phase, usize, usize)>,
    pub n_frames: usize,
}

impl PhaseSegmentation {
    pub fn span(&self, phase: Phase) -> Option<(usize, usize)> {
        self.spans
            .iter()
            .find(|(p, _, _)| *p == phase)
            .map(|&(_, s, e)| (s, e))
    }

    pub fn validate(&self) -> Result<()> {
        if self.spans.len() != 6 {
            return Err(Error::Segmentation(format!(
                "expected 6 phases, got {}",
                self.spans.len()
            )));
        }
        let mut cursor = 0usize;
        for (i, &(phase, start, end)) in self.spans.iter().enumerate() {
            if phase != Phase::ORDER[i] {
                return Err(Error::Segmentation("phases out of canonical order".into()));
            }
            if start != cursor || end < start {
                return Err(Error::Segmentation("phases not contiguous".into()));
            }
            cursor = end;
        }
        if cursor != self.n_frames {
            return Err(Error::Segmentation("phases do not cover the trial".into()));
        }
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, Serialize, Deserialize)]
pub struct PhaseConfig {
    /// Onset/offset threshold as a fraction of each bout's peak velocity.
    pub onset_fraction: f64,
    /// Minimum quiet or active dwell, seconds.
    pub min_dwell_s: f64,
    /// Absolute velocity floor, m/s; below it a sample is inactive.
    pub velocity_floor: f64,
}

impl Default for PhaseConfig {
    fn default() -> Self {
        PhaseConfig {
            onset_fraction: 0.05,
            min_dwell_s: 0.1,
            velocity_floor: 0.05,
        }
    }
}

#[derive(Clone, Copy, Debug, Serialize, Deserialize)]
pub struct MovementUnitConfig {
    /// Minimum peak prominence, m/s.
    pub min_prominence: f64,
    /// Minimum separation between counted peaks, seconds.
    pub min_separation_s: f64,
}

impl Default for MovementUnitConfig {
    fn default() -> Self {
        MovementUnitConfig {
            min_prominence: 0.02,
            min_separation_s: 0.15,
        }
    }
}

/// Find active bouts: runs of `v >= floor`, with sub-dwell gaps merged and
/// sub-dwell blips dropped.
fn activity_bouts(eev: &[f64], floor: f64, min_dwell: usize) -> Vec<(usize, usize)> {
    let mut runs: Vec<(usize, usize)> = Vec::new();
    let mut start = None;
    for (i, &v) in eev.iter().enumerate() {
        match (start, v >= floor) {
            (None, true) => start = Some(i),
            (Some(s), false) => {
                runs.push((s, i));
                start = None;
            }
            _ => {}
        }
    }
    if let Some(s) = start {
        runs.push((s, eev.len()));
    }
    // Merge runs separated by short gaps.
    let mut merged: Vec<(usize, usize)> = Vec::new();
    for run in runs {
        match merged.last_mut() {
            Some(last) if run.0 - last.1 < min_dwell => last.1 = run.1,
            _ => merged.push(run),
        }
    }
    merged.retain(|&(s, e)| e - s >= min_dwell);
    merged
}

/// Walk outward from a bout's peak to the crossings of
/// `onset_fraction * peak`, bounded to the search window.
fn refine_bout(
    eev: &[f64],
    bout: (usize, usize),
    lo_bound: usize,
    hi_bound: usize,
    fraction: f64,
) -> (usize, usize, usize) {
    let (s, e) = bout;
    let peak_idx = (s..e)
        .max_by(|&a, &b| eev[a].partial_cmp(&eev[b]).unwrap())
        .unwrap();
    let thresh = fraction * eev[peak_idx];
    let mut onset = peak_idx;
    while onset > lo_bound && eev[onset - 1] >= thresh {
        onset -= 1;
    }
    let mut offset = peak_idx;
    while offset + 1 < hi_bound && eev[offset + 1] >= thresh {
        offset += 1;
    }
    (onset, offset + 1, peak_idx)
}

/// Segment a trial into the six canonical phases from its end-effector
/// velocity.
pub fn classify_phases(eev: &[f64], rate_hz: f64, cfg: &PhaseConfig) -> Result<PhaseSegmentation> {
    let n = eev.len();
    if n < 10 {
        return Err(Error::TooShort { needed: 10, got: n });
    }
    let max_v = eev.iter().fold(0.0f64, |m, &v| m.max(v));
    if max_v <= cfg.velocity_floor {
        return Err(Error::Segmentation(format!(
            "velocity never exceeds the {} m/s floor",
            cfg.velocity_floor
        )));
    }
    let min_dwell = ((cfg.min_dwell_s * rate_hz).round() as usize).max(1);
    let mut bouts = activity_bouts(eev, cfg.velocity_floor, min_dwell);
    if bouts.len() < 4 {
        return Err(Error::Segmentation(format!(
            "expected 4 movement bouts, found {}",
            bouts.len()
        )));
    }
    if bouts.len() > 4 {
        // Keep the four with the largest peaks, preserving time order.
        let mut indexed: Vec<(usize, f64)> = bouts
            .iter()
            .enumerate()
            .map(|(i, &(s, e))| (i, eev[s..e].iter().fold(0.0f64, |m, &v| m.max(v))))
            .collect();
        indexed.sort_by(|a, b| b.1.partial_cmp(&a.1).unwrap());
        let mut keep: Vec<usize> = indexed.iter().take(4).map(|&(i, _)| i).collect();
        keep.sort_unstable();
        bouts = keep.into_iter().map(|i| bouts[i]).collect();
    }

    // Refine each bout to its own 5%-of-peak crossings; bound the walk by the
    // neighboring bouts so refinements stay ordered.
    let mut refined = Vec::with_capacity(4);
    for (k, &bout) in bouts.iter().enumerate() {
        let lo = if k == 0 { 0 } else { bouts[k - 1].1 };
        let hi = if k == 3 { n } else { bouts[k + 1].0 };
        refined.push(refine_bout(eev, bout, lo, hi, cfg.onset_fraction));
    }
    let (_, off1, _) = refined[0];
    let (_, off2, _) = refined[1];
    let (on3, off3, _) = refined[2];
    let (_, off4, _) = refined[3];

    let seg = PhaseSegmentation {
        spans: vec![
            (Phase::Reaching, 0, off1),
            (Phase::Forward, off1, off2),
            (Phase::Drinking, off2, on3),
            (Phase::Back, on3, off3),
            (Phase::Returning, off3, off4),
            (Phase::Rest, off4, n),
        ],
        n_frames: n,
    };
    seg.validate()?;
    Ok(seg)
}

/// Local maxima of a velocity segment with their prominences.
///
/// Prominence of a peak is its height above the higher of the two deepest
/// minima separating it from taller samples on each side (segment edges count
/// as barriers).
pub fn velocity_peaks(v: &[f64]) -> Vec<(usize, f64)> {
    let n = v.len();
    let mut peaks = Vec::new();
    for i in 1..n.saturating_sub(1) {
        // Plateau-tolerant maximum: strictly rising before, non-rising after,
        // taking the first sample of a plateau.
        if v[i] > v[i - 1] && v[i] >= v[i + 1] {
            // left saddle
            let mut left_min = v[i];
            let mut j = i;
            while j > 0 {
                j -= 1;
                left_min = left_min.min(v[j]);
                if v[j] > v[i] {
                    break;
                }
            }
            let mut right_min = v[i];
            let mut j = i;
            while j + 1 < n {
                j += 1;
                right_min = right_min.min(v[j]);
                if v[j] > v[i] {
                    break;
                }
            }
            peaks.push((i, v[i] - left_min.max(right_min)));
        }
    }
    peaks
}

/// Count movement units: velocity peaks with prominence and separation above
/// the configured floors. Taller peaks win separation conflicts.
pub fn count_movement_units(eev: &[f64], rate_hz: f64, cfg: &MovementUnitConfig) -> usize {
    movement_unit_peaks(eev, rate_hz, cfg).len()
}

/// Indices of the counted movement-unit peaks, in time order.
pub fn movement_unit_peaks(eev: &[f64], rate_hz: f64, cfg: &MovementUnitConfig) -> Vec<usize> {
    let min_sep = (cfg.min_separation_s * rate_hz).round() as isize;
    let mut candidates: Vec<(usize, f64)> = velocity_peaks(eev)
        .into_iter()
        .filter(|&(_, prom)| prom >= cfg.min_prominence)
        .collect();
    candidates.sort_by(|a, b| {
        eev[b.0]
            .partial_cmp(&eev[a.0])
            .unwrap()
            .then(a.0.cmp(&b.0))
    });
    let mut accepted: Vec<usize> = Vec::new();
    for (idx, _) in candidates {
        if accepted
            .iter()
            .all(|&a| (a as isize - idx as isize).abs() >= min_sep)
        {
            accepted.push(idx);
        }
    }
    accepted.sort_unstable();
    accepted
}

/// The twelve movement-quality measures of one trial.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct MeasureSet {
    pub total_movement_time_s: f64,
    pub n_movement_units: usize,
    pub peak_velocity_m_s: f64,
    pub elbow_angular_pv_deg_s: f64,
    pub time_to_pv_s: f64,
    pub time_to_first_pv_s: f64,
    pub max_elbow_extension_deg: f64,
    pub max_shoulder_abduction_deg: f64,
    pub max_trunk_displacement_mm: f64,
    pub max_shoulder_flexion_reach_deg: f64,
    pub max_shoulder_flexion_drink_deg: f64,
    /// Pearson correlation between elbow extension (negated flexion) and
    /// shoulder flexion during reaching; `None` when a channel has zero
    /// variance.
    pub interjoint_coordination: Option<f64>,
}

impl MeasureSet {
    pub const COLUMNS: [&'static str; 12] = [
        "total_movement_time_s",
        "n_movement_units",
        "peak_velocity_m_s",
        "elbow_angular_pv_deg_s",
        "time_to_pv_s",
        "time_to_first_pv_s",
        "max_elbow_extension_deg",
        "max_shoulder_abduction_deg",
        "max_trunk_displacement_mm",
        "max_shoulder_flexion_reach_deg",
        "max_shoulder_flexion_drink_deg",
        "interjoint_coordination",
    ];
}

#[derive(Clone, Copy, Debug, Default, Serialize, Deserialize)]
pub struct MeasureConfig {
    pub movement_units: MovementUnitConfig,
}

fn pearson(a: &[f64], b: &[f64]) -> Option<f64> {
    let n = a.len() as f64;
    if a.len() < 3 || a.len() != b.len() {
        return None;
    }
    let ma = a.iter().sum::<f64>() / n;
    let mb = b.iter().sum::<f64>() / n;
    let mut sab = 0.0;
    let mut saa = 0.0;
    let mut sbb = 0.0;
    for (x, y) in a.iter().zip(b) {
        sab += (x - ma) * (y - mb);
        saa += (x - ma) * (x - ma);
        sbb += (y - mb) * (y - mb);
    }
    if saa <= 0.0 || sbb <= 0.0 {
        return None;
    }
    Some(sab / (saa * sbb).sqrt())
}

/// Compute the twelve measures from a series and an (externally supplied)
/// segmentation.
///
/// Peak velocity, elbow angular peak, and the time-to-peak measures are taken
/// within Reaching; shoulder flexion maxima within Reaching and Drinking
/// separately; shoulder abduction over Reaching and Drinking combined; trunk
/// displacement over the whole task; movement units summed over the four
/// movement phases. Times are reported in seconds from the reach onset.
pub fn compute_measures(
    series: &TrajectorySeries,
    phases: &PhaseSegmentation,
    cfg: &MeasureConfig,
) -> Result<MeasureSet> {
    phases.validate()?;
    if series.len() != phases.n_frames {
        return Err(Error::DimensionMismatch {
            context: "measure series length",
            expected: phases.n_frames,
            got: series.len(),
        });
    }
    let rate = series.rate_hz;
    let eev = series.channel(ChannelId::EndEffectorVelocity)?;
    let elbow = series.channel(ChannelId::ElbowFlexion)?;
    let elbow_vel = series.channel(ChannelId::ElbowAngularVelocity)?;
    let shoulder_flex = series.channel(ChannelId::ShoulderFlexion)?;
    let shoulder_abd = series.channel(ChannelId::ShoulderAbduction)?;
    let trunk = series.channel(ChannelId::TrunkDisplacement)?;

    let (reach_s, reach_e) = phases.span(Phase::Reaching).unwrap();
    let (drink_s, drink_e) = phases.span(Phase::Drinking).unwrap();
    let (_, return_e) = phases.span(Phase::Returning).unwrap();

    let max_of = |x: &[f64], s: usize, e: usize| x[s..e].iter().fold(f64::MIN, |m, &v| m.max(v));
    let min_of = |x: &[f64], s: usize, e: usize| x[s..e].iter().fold(f64::MAX, |m, &v| m.min(v));

    let total_movement_time_s = (return_e - reach_s) as f64 / rate;

    let mut n_movement_units = 0usize;
    for phase in [Phase::Reaching, Phase::Forward, Phase::Back, Phase::Returning] {
        let (s, e) = phases.span(phase).unwrap();
        if e > s {
            n_movement_units += count_movement_units(&eev[s..e], rate, &cfg.movement_units);
        }
    }

    let reach_eev = &eev[reach_s..reach_e];
    let pv_idx = (0..reach_eev.len())
        .max_by(|&a, &b| reach_eev[a].partial_cmp(&reach_eev[b]).unwrap())
        .ok_or_else(|| Error::Segmentation("empty reaching phase".into()))?;
    let peak_velocity_m_s = reach_eev[pv_idx];
    let time_to_pv_s = pv_idx as f64 / rate;

    let unit_peaks = movement_unit_peaks(reach_eev, rate, &cfg.movement_units);
    let first_idx = unit_peaks.first().copied().unwrap_or(pv_idx).min(pv_idx);
    let time_to_first_pv_s = first_idx as f64 / rate;

    let elbow_angular_pv_deg_s = elbow_vel[reach_s..reach_e]
        .iter()
        .fold(0.0f64, |m, &v| m.max(v.abs()));

    // Extension = negated flexion; the measure reports the angle reached at
    // maximal extension, i.e. the flexion minimum during reaching.
    let max_elbow_extension_deg = min_of(elbow, reach_s, reach_e);

    let max_shoulder_abduction_deg =
        max_of(shoulder_abd, reach_s, reach_e).max(max_of(shoulder_abd, drink_s, drink_e.max(drink_s + 1).min(phases.n_frames)));

    let max_trunk_displacement_mm = max_of(trunk, 0, trunk.len());
    let max_shoulder_flexion_reach_deg = max_of(shoulder_flex, reach_s, reach_e);
    let max_shoulder_flexion_drink_deg = if drink_e > drink_s {
        max_of(shoulder_flex, drink_s, drink_e)
    } else {
        f64::NAN
    };

    let extension: Vec<f64> = elbow[reach_s..reach_e].iter().map(|&v| -v).collect();
    let interjoint_coordination = pearson(&extension, &shoulder_flex[reach_s..reach_e]);

    Ok(MeasureSet {
        total_movement_time_s,
        n_movement_units,
        peak_velocity_m_s,
        elbow_angular_pv_deg_s,
        time_to_pv_s,
        time_to_first_pv_s,
        max_elbow_extension_deg,
        max_shoulder_abduction_deg,
        max_trunk_displacement_mm,
        max_shoulder_flexion_reach_deg,
        max_shoulder_flexion_drink_deg,
        interjoint_coordination,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    /// Bell-shaped bump of the given peak centered at `c` with half-width `w`
    /// (smooth cosine profile, zero outside).
    fn bump(t: f64, c: f64, w: f64, peak: f64) -> f64 {
        let x = (t - c) / w;
        if x.abs() >= 1.0 {
            0.0
        } else {
            peak * 0.5 * (1.0 + (std::f64::consts::PI * x).cos())
        }
    }

    /// Four-bout velocity profile with a quiet drinking plateau.
    fn drinking_velocity(rate: f64, dur: f64) -> Vec<f64> {
        let n = (rate * dur) as usize;
        (0..n)
            .map(|i| {
                let t = i as f64 / rate;
                bump(t, 0.7, 0.45, 0.6)
                    + bump(t, 1.8, 0.45, 0.5)
                    + bump(t, 3.6, 0.45, 0.5)
                    + bump(t, 4.7, 0.45, 0.55)
            })
            .collect()
    }

    #[test]
    fn six_phases_in_canonical_order() {
        let rate = 60.0;
        let v = drinking_velocity(rate, 6.0);
        let seg = classify_phases(&v, rate, &PhaseConfig::default()).unwrap();
        seg.validate().unwrap();
        let names: Vec<_> = seg.spans.iter().map(|(p, _, _)| p.name()).collect();
        assert_eq!(
            names,
            ["reaching", "forward", "drinking", "back", "returning", "rest"]
        );
        // Drinking is the long quiet stretch between bouts 2 and 3.
        let (ds, de) = seg.span(Phase::Drinking).unwrap();
        assert!((de - ds) as f64 / rate > 0.8, "drinking too short");
    }

    #[test]
    fn boundaries_match_analytic_crossings() {
        let rate = 60.0;
        let v = drinking_velocity(rate, 6.0);
        let cfg = PhaseConfig::default();
        let seg = classify_phases(&v, rate, &cfg).unwrap();
        // Analytic 5%-of-peak crossing of a cosine bump at distance d from
        // center: 0.5 (1 + cos(pi d / w)) = 0.05.
        let d = 0.45 * (2.0f64 * 0.05 - 1.0).acos() / std::f64::consts::PI;
        let expected_off1 = ((0.7 + d) * rate).round() as usize;
        let (_, e) = seg.span(Phase::Reaching).unwrap();
        assert!(
            (e as isize - expected_off1 as isize).abs() <= 1,
            "reach offset {e} vs analytic {expected_off1}"
        );
        let expected_on3 = ((3.6 - d) * rate).floor() as usize;
        let (bs, _) = seg.span(Phase::Back).unwrap();
        assert!((bs as isize - expected_on3 as isize).abs() <= 1);
    }

    #[test]
    fn all_zero_velocity_fails() {
        let v = vec![0.0; 300];
        assert!(matches!(
            classify_phases(&v, 60.0, &PhaseConfig::default()),
            Err(Error::Segmentation(_))
        ));
    }

    #[test]
    fn single_bell_is_one_movement_unit() {
        let rate = 60.0;
        let v: Vec<f64> = (0..120)
            .map(|i| bump(i as f64 / rate, 1.0, 0.5, 0.5))
            .collect();
        assert_eq!(
            count_movement_units(&v, rate, &MovementUnitConfig::default()),
            1
        );
    }

    #[test]
    fn two_bells_with_deep_trough_are_two_units() {
        let rate = 60.0;
        // Two 0.5 m/s bells 500 ms apart; trough at 0.1 m/s.
        let v: Vec<f64> = (0..180)
            .map(|i| {
                let t = i as f64 / rate;
                let a = bump(t, 1.0, 0.35, 0.5);
                let b = bump(t, 1.5, 0.35, 0.5);
                (a + b).max(bump(t, 1.25, 0.6, 0.1))
            })
            .collect();
        let oracle = brute_force_units(&v, rate, &MovementUnitConfig::default());
        assert_eq!(oracle, 2);
        assert_eq!(
            count_movement_units(&v, rate, &MovementUnitConfig::default()),
            2
        );
    }

    #[test]
    fn tiny_ripple_does_not_count() {
        let rate = 60.0;
        let v: Vec<f64> = (0..120)
            .map(|i| {
                let t = i as f64 / rate;
                bump(t, 1.0, 0.5, 0.5) + 0.0025 * (std::f64::consts::TAU * 9.0 * t).sin()
            })
            .collect();
        let cfg = MovementUnitConfig::default();
        assert_eq!(count_movement_units(&v, rate, &cfg), brute_force_units(&v, rate, &cfg));
        assert_eq!(count_movement_units(&v, rate, &cfg), 1);
    }

    /// Brute force oracle: enumerate all local maxima, compute prominence by
    /// scanning, then greedily keep tall peaks respecting separation.
    fn brute_force_units(v: &[f64], rate: f64, cfg: &MovementUnitConfig) -> usize {
        let n = v.len();
        let mut cands = Vec::new();
        for i in 1..n - 1 {
            if !(v[i] > v[i - 1] && v[i] >= v[i + 1]) {
                continue;
            }
            // prominence by explicit scan
            let mut lm = v[i];
            let mut k = i;
            loop {
                if k == 0 {
                    break;
                }
                k -= 1;
                if v[k] > v[i] {
                    break;
                }
                lm = lm.min(v[k]);
            }
            let mut rm = v[i];
            let mut k = i;
            loop {
                if k == n - 1 {
                    break;
                }
                k += 1;
                if v[k] > v[i] {
                    break;
                }
                rm = rm.min(v[k]);
            }
            let prom = v[i] - lm.max(rm);
            if prom >= cfg.min_prominence {
                cands.push(i);
            }
        }
        cands.sort_by(|&a, &b| v[b].partial_cmp(&v[a]).unwrap().then(a.cmp(&b)));
        let min_sep = (cfg.min_separation_s * rate).round() as isize;
        let mut kept: Vec<usize> = Vec::new();
        for i in cands {
            if kept
                .iter()
                .all(|&k| (k as isize - i as isize).abs() >= min_sep)
            {
                kept.push(i);
            }
        }
        kept.len()
    }

    fn synthetic_series(rate: f64) -> (TrajectorySeries, PhaseSegmentation) {
        let v = drinking_velocity(rate, 6.0);
        let n = v.len();
        let seg = classify_phases(&v, rate, &PhaseConfig::default()).unwrap();
        let mut s = TrajectorySeries::new(rate, 0.0);
        s.insert(
            ChannelId::ShoulderFlexion,
            (0..n).map(|i| 20.0 + 30.0 * (i as f64 / n as f64)).collect(),
        );
        s.insert(
            ChannelId::ShoulderAbduction,
            (0..n)
                .map(|i| 10.0 + 5.0 * (std::f64::consts::TAU * i as f64 / n as f64).sin())
                .collect(),
        );
        s.insert(
            ChannelId::ElbowFlexion,
            (0..n).map(|i| 90.0 - 40.0 * (i as f64 / n as f64)).collect(),
        );
        s.insert(
            ChannelId::ElbowAngularVelocity,
            (0..n)
                .map(|i| 50.0 * (std::f64::consts::TAU * i as f64 / n as f64).sin())
                .collect(),
        );
        s.insert(ChannelId::EndEffectorVelocity, v);
        s.insert(
            ChannelId::TrunkDisplacement,
            (0..n)
                .map(|i| 40.0 * (std::f64::consts::PI * i as f64 / n as f64).sin().abs())
                .collect(),
        );
        (s, seg)
    }

    #[test]
    fn single_peak_times_agree() {
        let rate = 60.0;
        let n = 240;
        let mut s = TrajectorySeries::new(rate, 0.0);
        let v: Vec<f64> = (0..n)
            .map(|i| bump(i as f64 / rate, 0.4, 0.3, 0.6))
            .collect();
        // A minimal plausible trial: one bump in reaching, everything else
        // constructed by hand.
        let seg = PhaseSegmentation {
            spans: vec![
                (Phase::Reaching, 0, 60),
                (Phase::Forward, 60, 90),
                (Phase::Drinking, 90, 150),
                (Phase::Back, 150, 190),
                (Phase::Returning, 190, 220),
                (Phase::Rest, 220, n),
            ],
            n_frames: n,
        };
        s.insert(ChannelId::EndEffectorVelocity, v);
        s.insert(ChannelId::ShoulderFlexion, vec![30.0; n]);
        s.insert(ChannelId::ShoulderAbduction, vec![10.0; n]);
        s.insert(ChannelId::ElbowFlexion, (0..n).map(|i| 90.0 - 0.1 * i as f64).collect());
        s.insert(ChannelId::ElbowAngularVelocity, vec![-6.0; n]);
        s.insert(ChannelId::TrunkDisplacement, vec![0.0; n]);
        let m = compute_measures(&s, &seg, &MeasureConfig::default()).unwrap();
        assert_relative_eq!(m.peak_velocity_m_s, 0.6, max_relative = 1e-9);
        assert_relative_eq!(m.time_to_pv_s, 0.4, epsilon = 1e-9);
        assert_relative_eq!(m.time_to_first_pv_s, 0.4, epsilon = 1e-9);
    }

    #[test]
    fn linear_joint_coupling_gives_perfect_coordination() {
        let (mut s, seg) = synthetic_series(60.0);
        let n = s.len();
        // Elbow extension (= -flexion) and shoulder flexion both linear in t.
        s.insert(
            ChannelId::ElbowFlexion,
            (0..n).map(|i| 90.0 - 0.2 * i as f64).collect(),
        );
        s.insert(
            ChannelId::ShoulderFlexion,
            (0..n).map(|i| 20.0 + 0.15 * i as f64).collect(),
        );
        let m = compute_measures(&s, &seg, &MeasureConfig::default()).unwrap();
        assert_relative_eq!(m.interjoint_coordination.unwrap(), 1.0, epsilon = 1e-12);
    }

    /// Naive independent recomputation of every measure from raw arrays.
    fn naive_measures(
        s: &TrajectorySeries,
        seg: &PhaseSegmentation,
        cfg: &MeasureConfig,
    ) -> MeasureSet {
        let rate = s.rate_hz;
        let eev = s.channel(ChannelId::EndEffectorVelocity).unwrap();
        let ef = s.channel(ChannelId::ElbowFlexion).unwrap();
        let ev = s.channel(ChannelId::ElbowAngularVelocity).unwrap();
        let sf = s.channel(ChannelId::ShoulderFlexion).unwrap();
        let sa = s.channel(ChannelId::ShoulderAbduction).unwrap();
        let tr = s.channel(ChannelId::TrunkDisplacement).unwrap();
        let (rs, re) = seg.span(Phase::Reaching).unwrap();
        let (ds, de) = seg.span(Phase::Drinking).unwrap();
        let (_, rete) = seg.span(Phase::Returning).unwrap();

        let mut pv = f64::MIN;
        let mut pv_i = 0;
        for i in rs..re {
            if eev[i] > pv {
                pv = eev[i];
                pv_i = i;
            }
        }
        let units: usize = [Phase::Reaching, Phase::Forward, Phase::Back, Phase::Returning]
            .iter()
            .map(|&p| {
                let (a, b) = seg.span(p).unwrap();
                brute_force_units(&eev[a..b], rate, &cfg.movement_units)
            })
            .sum();
        let first = movement_unit_peaks(&eev[rs..re], rate, &cfg.movement_units)
            .first()
            .copied()
            .unwrap_or(pv_i - rs)
            .min(pv_i - rs);
        let mut eapv = 0.0f64;
        for i in rs..re {
            eapv = eapv.max(ev[i].abs());
        }
        let mut ext = f64::MAX;
        for i in rs..re {
            ext = ext.min(ef[i]);
        }
        let mut abd = f64::MIN;
        for i in (rs..re).chain(ds..de) {
            abd = abd.max(sa[i]);
        }
        let mut trunk = f64::MIN;
        for &v in tr {
            trunk = trunk.max(v);
        }
        let mut sfr = f64::MIN;
        for i in rs..re {
            sfr = sfr.max(sf[i]);
        }
        let mut sfd = f64::MIN;
        for i in ds..de {
            sfd = sfd.max(sf[i]);
        }
        let negated: Vec<f64> = ef[rs..re].iter().map(|&v| -v).collect();
        MeasureSet {
            total_movement_time_s: (rete - rs) as f64 / rate,
            n_movement_units: units,
            peak_velocity_m_s: pv,
            elbow_angular_pv_deg_s: eapv,
            time_to_pv_s: (pv_i - rs) as f64 / rate,
            time_to_first_pv_s: first as f64 / rate,
            max_elbow_extension_deg: ext,
            max_shoulder_abduction_deg: abd,
            max_trunk_displacement_mm: trunk,
            max_shoulder_flexion_reach_deg: sfr,
            max_shoulder_flexion_drink_deg: sfd,
            interjoint_coordination: pearson(&negated, &sf[rs..re]),
        }
    }

    #[test]
    fn measures_match_naive_oracle() {
        let (s, seg) = synthetic_series(60.0);
        let cfg = MeasureConfig::default();
        let ours = compute_measures(&s, &seg, &cfg).unwrap();
        let oracle = naive_measures(&s, &seg, &cfg);
        assert_relative_eq!(ours.total_movement_time_s, oracle.total_movement_time_s, epsilon = 1e-9);
        assert_eq!(ours.n_movement_units, oracle.n_movement_units);
        assert_relative_eq!(ours.peak_velocity_m_s, oracle.peak_velocity_m_s, epsilon = 1e-9);
        assert_relative_eq!(ours.elbow_angular_pv_deg_s, oracle.elbow_angular_pv_deg_s, epsilon = 1e-9);
        assert_relative_eq!(ours.time_to_pv_s, oracle.time_to_pv_s, epsilon = 1e-9);
        assert_relative_eq!(ours.time_to_first_pv_s, oracle.time_to_first_pv_s, epsilon = 1e-9);
        assert_relative_eq!(ours.max_elbow_extension_deg, oracle.max_elbow_extension_deg, epsilon = 1e-9);
        assert_relative_eq!(ours.max_shoulder_abduction_deg, oracle.max_shoulder_abduction_deg, epsilon = 1e-9);
        assert_relative_eq!(ours.max_trunk_displacement_mm, oracle.max_trunk_displacement_mm, epsilon = 1e-9);
        assert_relative_eq!(ours.max_shoulder_flexion_reach_deg, oracle.max_shoulder_flexion_reach_deg, epsilon = 1e-9);
        assert_relative_eq!(ours.max_shoulder_flexion_drink_deg, oracle.max_shoulder_flexion_drink_deg, epsilon = 1e-9);
        assert_relative_eq!(
            ours.interjoint_coordination.unwrap(),
            oracle.interjoint_coordination.unwrap(),
            epsilon = 1e-9
        );
    }

    #[test]
    fn first_pv_never_after_pv() {
        let (s, seg) = synthetic_series(60.0);
        let m = compute_measures(&s, &seg, &MeasureConfig::default()).unwrap();
        assert!(m.time_to_first_pv_s <= m.time_to_pv_s);
    }

    #[test]
    fn missing_channel_names_the_channel() {
        let rate = 60.0;
        let v = drinking_velocity(rate, 6.0);
        let n = v.len();
        let seg = classify_phases(&v, rate, &PhaseConfig::default()).unwrap();
        let mut s = TrajectorySeries::new(rate, 0.0);
        s.insert(ChannelId::EndEffectorVelocity, v);
        s.insert(ChannelId::ShoulderFlexion, vec![0.0; n]);
        let err = compute_measures(&s, &seg, &MeasureConfig::default()).unwrap_err();
        assert!(err.to_string().contains("elbow"));
    }
}
