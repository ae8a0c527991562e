//! File formats: calibration and model documents (JSON), keypoint / marker /
//! trajectory / measure tables (delimited text with a schema header line),
//! and fit result documents.
//!
//! Every file starts with a schema identifier: a `# armcap-...-v1` comment
//! line for delimited files, a `"schema"` field for JSON documents. Writers
//! are deterministic (no timestamps; default shortest-round-trip float
//! formatting), so reruns with identical inputs are byte-identical.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::camera::{Camera, CameraExtrinsics, CameraIntrinsics, CameraRig, Observation2D};
use crate::compare::{AggregateReport, Arm, MeasureCorrelation, MeasurePair, TrialComparison};
use crate::error::{Error, Result};
use crate::kin::{ChannelId, TrajectorySeries};
use crate::measures::MeasureSet;
use crate::model::{BodyModel, MarkerCloud};
use crate::solvers::{FitConfig, Marker3DTrial, SessionFit, TrialObservations, TwoStageFit};

fn parse_err(path: &Path, line: usize, msg: impl Into<String>) -> Error {
    Error::Parse {
        path: path.display().to_string(),
        line,
        msg: msg.into(),
    }
}

fn read_to_string(path: &Path) -> Result<String> {
    std::fs::read_to_string(path).map_err(|e| {
        Error::Io(std::io::Error::new(
            e.kind(),
            format!("{}: {e}", path.display()),
        ))
    })
}

// ---------------------------------------------------------------------------
// Calibration file
// ---------------------------------------------------------------------------

#[derive(Serialize, Deserialize)]
struct CalibrationCameraDoc {
    id: String,
    image_size: [u32; 2],
    /// `[fx, fy, cx, cy]`, pixels.
    #[serde(rename = "K")]
    k: [f64; 4],
    /// `[k1, k2, p1, p2, k3]`.
    dist: [f64; 5],
    /// World-to-camera rotation, row-major.
    #[serde(rename = "R")]
    r: [f64; 9],
    /// Meters.
    t: [f64; 3],
}

#[derive(Serialize, Deserialize)]
struct CalibrationDoc {
    schema: String,
    cameras: Vec<CalibrationCameraDoc>,
}

pub const CALIBRATION_SCHEMA: &str = "armcap-calibration-v1";

pub fn write_calibration(path: &Path, rig: &CameraRig) -> Result<()> {
    let doc = CalibrationDoc {
        schema: CALIBRATION_SCHEMA.to_string(),
        cameras: rig
            .cameras
            .iter()
            .map(|c| {
                let r = c.extrinsics.rotation;
                CalibrationCameraDoc {
                    id: c.id.clone(),
                    image_size: c.image_size,
                    k: [c.intrinsics.fx, c.intrinsics.fy, c.intrinsics.cx, c.intrinsics.cy],
                    dist: c.intrinsics.dist,
                    r: [
                        r[0][0], r[0][1], r[0][2], r[1][0], r[1][1], r[1][2], r[2][0], r[2][1],
                        r[2][2],
                    ],
                    t: c.extrinsics.translation,
                }
            })
            .collect(),
    };
    std::fs::write(path, serde_json::to_string_pretty(&doc)? + "\n")?;
    Ok(())
}

pub fn read_calibration(path: &Path) -> Result<CameraRig> {
    let doc: CalibrationDoc = serde_json::from_str(&read_to_string(path)?)?;
    if doc.schema != CALIBRATION_SCHEMA {
        return Err(parse_err(path, 1, format!("unexpected schema `{}`", doc.schema)));
    }
    let rig = CameraRig {
        cameras: doc
            .cameras
            .into_iter()
            .map(|c| Camera {
                id: c.id,
                image_size: c.image_size,
                intrinsics: CameraIntrinsics {
                    fx: c.k[0],
                    fy: c.k[1],
                    cx: c.k[2],
                    cy: c.k[3],
                    dist: c.dist,
                },
                extrinsics: CameraExtrinsics {
                    rotation: [
                        [c.r[0], c.r[1], c.r[2]],
                        [c.r[3], c.r[4], c.r[5]],
                        [c.r[6], c.r[7], c.r[8]],
                    ],
                    translation: c.t,
                },
            })
            .collect(),
    };
    rig.validate()?;
    Ok(rig)
}

// ---------------------------------------------------------------------------
// Model / config / fit documents (JSON with a schema field)
// ---------------------------------------------------------------------------

#[derive(Serialize, Deserialize)]
struct Versioned<T> {
    schema: String,
    #[serde(flatten)]
    data: T,
}

fn write_json_doc<T: Serialize>(path: &Path, schema: &str, data: &T) -> Result<()> {
    let doc = Versioned {
        schema: schema.to_string(),
        data,
    };
    std::fs::write(path, serde_json::to_string_pretty(&doc)? + "\n")?;
    Ok(())
}

fn read_json_doc<T: for<'de> Deserialize<'de>>(path: &Path, schema: &str) -> Result<T> {
    let doc: Versioned<T> = serde_json::from_str(&read_to_string(path)?)?;
    if doc.schema != schema {
        return Err(parse_err(path, 1, format!("unexpected schema `{}`", doc.schema)));
    }
    Ok(doc.data)
}

pub fn write_model(path: &Path, model: &BodyModel) -> Result<()> {
    write_json_doc(path, "armcap-model-v1", model)
}

pub fn read_model(path: &Path) -> Result<BodyModel> {
    read_json_doc(path, "armcap-model-v1")
}

pub fn write_fit_config(path: &Path, cfg: &FitConfig) -> Result<()> {
    write_json_doc(path, "armcap-fit-config-v1", cfg)
}

pub fn read_fit_config(path: &Path) -> Result<FitConfig> {
    read_json_doc(path, "armcap-fit-config-v1")
}

pub fn write_session_fit(path: &Path, fit: &SessionFit) -> Result<()> {
    write_json_doc(path, "armcap-session-fit-v1", fit)
}

pub fn read_session_fit(path: &Path) -> Result<SessionFit> {
    read_json_doc(path, "armcap-session-fit-v1")
}

pub fn write_two_stage_fit(path: &Path, fit: &TwoStageFit) -> Result<()> {
    write_json_doc(path, "armcap-two-stage-fit-v1", fit)
}

pub fn read_two_stage_fit(path: &Path) -> Result<TwoStageFit> {
    read_json_doc(path, "armcap-two-stage-fit-v1")
}

/// Session manifest: which trials exist, their arms and rates.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct SessionManifest {
    pub participant: String,
    pub video_rate_hz: f64,
    pub marker_rate_hz: f64,
    pub trials: Vec<TrialMeta>,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct TrialMeta {
    pub id: String,
    pub arm: Arm,
    pub n_frames: usize,
}

pub fn write_session_manifest(path: &Path, manifest: &SessionManifest) -> Result<()> {
    write_json_doc(path, "armcap-session-v1", manifest)
}

pub fn read_session_manifest(path: &Path) -> Result<SessionManifest> {
    read_json_doc(path, "armcap-session-v1")
}

// ---------------------------------------------------------------------------
// Keypoint files (one per camera per trial)
// ---------------------------------------------------------------------------

/// `frame_index,keypoint_id,u,v,confidence` rows; absent rows are missing
/// observations.
pub fn write_keypoints(
    path: &Path,
    camera_id: &str,
    rate_hz: f64,
    model: &BodyModel,
    frames: &[Vec<Option<Observation2D>>],
) -> Result<()> {
    let mut out = String::new();
    writeln!(out, "# armcap-keypoints-v1 camera={camera_id} rate_hz={rate_hz}").unwrap();
    writeln!(out, "frame_index,keypoint_id,u,v,confidence").unwrap();
    for (f, row) in frames.iter().enumerate() {
        for (mi, obs) in row.iter().enumerate() {
            if let Some(o) = obs {
                writeln!(
                    out,
                    "{f},{},{},{},{}",
                    model.markers[mi].id, o.u, o.v, o.confidence
                )
                .unwrap();
            }
        }
    }
    std::fs::write(path, out)?;
    Ok(())
}

/// Read one camera's keypoint file into `[frame][marker]` observations.
pub fn read_keypoints(
    path: &Path,
    model: &BodyModel,
    n_frames: usize,
) -> Result<Vec<Vec<Option<Observation2D>>>> {
    let text = read_to_string(path)?;
    let mut frames = vec![vec![None; model.n_markers()]; n_frames];
    for (ln, line) in text.lines().enumerate() {
        if line.starts_with('#') || line.starts_with("frame_index") || line.trim().is_empty() {
            continue;
        }
        let parts: Vec<&str> = line.split(',').collect();
        if parts.len() != 5 {
            return Err(parse_err(path, ln + 1, format!("expected 5 columns, got {}", parts.len())));
        }
        let f: usize = parts[0]
            .parse()
            .map_err(|_| parse_err(path, ln + 1, "bad frame index (column 1)"))?;
        let mi = model
            .marker_index(parts[1])
            .ok_or_else(|| parse_err(path, ln + 1, format!("unknown keypoint `{}` (column 2)", parts[1])))?;
        let mut nums = [0.0f64; 3];
        for (k, p) in parts[2..].iter().enumerate() {
            nums[k] = p
                .parse()
                .map_err(|_| parse_err(path, ln + 1, format!("bad number (column {})", k + 3)))?;
        }
        if f >= n_frames {
            return Err(parse_err(path, ln + 1, format!("frame {f} out of range (column 1)")));
        }
        frames[f][mi] = Some(Observation2D {
            u: nums[0],
            v: nums[1],
            confidence: nums[2],
        });
    }
    Ok(frames)
}

/// Compose per-camera keypoint files into one trial. `paths` must align with
/// the rig's camera order.
pub fn read_trial_observations(
    paths: &[std::path::PathBuf],
    model: &BodyModel,
    trial_id: &str,
    arm: Arm,
    rate_hz: f64,
    n_frames: usize,
) -> Result<TrialObservations> {
    let mut per_camera = Vec::with_capacity(paths.len());
    for p in paths {
        per_camera.push(read_keypoints(p, model, n_frames)?);
    }
    let frames = (0..n_frames)
        .map(|f| per_camera.iter().map(|cam| cam[f].clone()).collect())
        .collect();
    Ok(TrialObservations {
        trial_id: trial_id.to_string(),
        arm,
        rate_hz,
        frames,
    })
}

// ---------------------------------------------------------------------------
// 3D marker files
// ---------------------------------------------------------------------------

pub fn write_markers(path: &Path, model: &BodyModel, trial: &Marker3DTrial) -> Result<()> {
    let mut out = String::new();
    writeln!(out, "# armcap-markers-v1 rate_hz={}", trial.rate_hz).unwrap();
    writeln!(out, "frame_index,marker_id,x,y,z").unwrap();
    for (f, cloud) in trial.frames.iter().enumerate() {
        for (mi, p) in cloud.0.iter().enumerate() {
            if let Some(p) = p {
                writeln!(out, "{f},{},{},{},{}", model.markers[mi].id, p[0], p[1], p[2]).unwrap();
            }
        }
    }
    std::fs::write(path, out)?;
    Ok(())
}

pub fn read_markers(path: &Path, model: &BodyModel) -> Result<Marker3DTrial> {
    let text = read_to_string(path)?;
    let mut rate_hz = None;
    let mut rows: Vec<(usize, usize, [f64; 3])> = Vec::new();
    let mut max_frame = 0usize;
    for (ln, line) in text.lines().enumerate() {
        if let Some(rest) = line.strip_prefix('#') {
            for token in rest.split_whitespace() {
                if let Some(v) = token.strip_prefix("rate_hz=") {
                    rate_hz = v.parse().ok();
                }
            }
            continue;
        }
        if line.starts_with("frame_index") || line.trim().is_empty() {
            continue;
        }
        let parts: Vec<&str> = line.split(',').collect();
        if parts.len() != 5 {
            return Err(parse_err(path, ln + 1, format!("expected 5 columns, got {}", parts.len())));
        }
        let f: usize = parts[0]
            .parse()
            .map_err(|_| parse_err(path, ln + 1, "bad frame index (column 1)"))?;
        let mi = model
            .marker_index(parts[1])
            .ok_or_else(|| parse_err(path, ln + 1, format!("unknown marker `{}` (column 2)", parts[1])))?;
        let mut p = [0.0f64; 3];
        for (k, s) in parts[2..].iter().enumerate() {
            p[k] = s
                .parse()
                .map_err(|_| parse_err(path, ln + 1, format!("bad number (column {})", k + 3)))?;
        }
        max_frame = max_frame.max(f);
        rows.push((f, mi, p));
    }
    let rate_hz = rate_hz.ok_or_else(|| parse_err(path, 1, "missing rate_hz header"))?;
    let mut frames = vec![MarkerCloud(vec![None; model.n_markers()]); max_frame + 1];
    for (f, mi, p) in rows {
        frames[f].0[mi] = Some(p);
    }
    Ok(Marker3DTrial { rate_hz, frames })
}

// ---------------------------------------------------------------------------
// Trajectory files
// ---------------------------------------------------------------------------

pub fn write_trajectory(path: &Path, series: &TrajectorySeries) -> Result<()> {
    series.validate()?;
    let mut out = String::new();
    writeln!(
        out,
        "# armcap-trajectory-v1 rate_hz={} t0_s={}",
        series.rate_hz, series.t0_s
    )
    .unwrap();
    let ids: Vec<ChannelId> = series.channels.keys().copied().collect();
    let header: Vec<String> = std::iter::once("time_s".to_string())
        .chain(ids.iter().map(|c| format!("{}_{}", c.name(), c.unit())))
        .collect();
    writeln!(out, "{}", header.join(",")).unwrap();
    for i in 0..series.len() {
        let mut row = vec![format!("{}", series.t0_s + i as f64 / series.rate_hz)];
        for id in &ids {
            row.push(format!("{}", series.channels[id][i]));
        }
        writeln!(out, "{}", row.join(",")).unwrap();
    }
    std::fs::write(path, out)?;
    Ok(())
}

pub fn read_trajectory(path: &Path) -> Result<TrajectorySeries> {
    let text = read_to_string(path)?;
    let mut rate_hz = None;
    let mut t0_s = 0.0;
    let mut ids: Vec<ChannelId> = Vec::new();
    let mut data: Vec<Vec<f64>> = Vec::new();
    for (ln, line) in text.lines().enumerate() {
        if let Some(rest) = line.strip_prefix('#') {
            for token in rest.split_whitespace() {
                if let Some(v) = token.strip_prefix("rate_hz=") {
                    rate_hz = v.parse().ok();
                }
                if let Some(v) = token.strip_prefix("t0_s=") {
                    t0_s = v.parse().unwrap_or(0.0);
                }
            }
            continue;
        }
        if line.trim().is_empty() {
            continue;
        }
        if line.starts_with("time_s") {
            for col in line.split(',').skip(1) {
                let name = col.rsplitn(2, '_').nth(1).map(|s| s.to_string());
                // Unit suffixes are one token for deg/mm, two for deg_s/m_s.
                let id = ChannelId::parse(col)
                    .or_else(|| name.as_deref().and_then(ChannelId::parse))
                    .or_else(|| {
                        col.rsplitn(3, '_').nth(2).and_then(ChannelId::parse)
                    })
                    .ok_or_else(|| parse_err(path, ln + 1, format!("unknown channel `{col}`")))?;
                ids.push(id);
                data.push(Vec::new());
            }
            continue;
        }
        let parts: Vec<&str> = line.split(',').collect();
        if parts.len() != ids.len() + 1 {
            return Err(parse_err(path, ln + 1, format!("expected {} columns, got {}", ids.len() + 1, parts.len())));
        }
        for (k, s) in parts[1..].iter().enumerate() {
            data[k].push(
                s.parse()
                    .map_err(|_| parse_err(path, ln + 1, format!("bad number (column {})", k + 2)))?,
            );
        }
    }
    let rate_hz = rate_hz.ok_or_else(|| parse_err(path, 1, "missing rate_hz header"))?;
    let mut series = TrajectorySeries::new(rate_hz, t0_s);
    for (id, values) in ids.into_iter().zip(data) {
        series.insert(id, values);
    }
    series.validate()?;
    Ok(series)
}

// ---------------------------------------------------------------------------
// Measure files
// ---------------------------------------------------------------------------

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct MeasureRow {
    pub participant: String,
    pub trial_id: String,
    pub arm: Arm,
    /// `mmc` or `omc`.
    pub system: String,
    pub measures: MeasureSet,
}

pub fn write_measure_rows(path: &Path, rows: &[MeasureRow]) -> Result<()> {
    let mut out = String::new();
    writeln!(out, "# armcap-measures-v1").unwrap();
    writeln!(
        out,
        "participant,trial_id,arm,system,{}",
        MeasureSet::COLUMNS.join(",")
    )
    .unwrap();
    for r in rows {
        let m = &r.measures;
        let ijc = m
            .interjoint_coordination
            .map(|v| format!("{v}"))
            .unwrap_or_else(|| "missing".to_string());
        writeln!(
            out,
            "{},{},{},{},{},{},{},{},{},{},{},{},{},{},{},{}",
            r.participant,
            r.trial_id,
            r.arm.name(),
            r.system,
            m.total_movement_time_s,
            m.n_movement_units,
            m.peak_velocity_m_s,
            m.elbow_angular_pv_deg_s,
            m.time_to_pv_s,
            m.time_to_first_pv_s,
            m.max_elbow_extension_deg,
            m.max_shoulder_abduction_deg,
            m.max_trunk_displacement_mm,
            m.max_shoulder_flexion_reach_deg,
            m.max_shoulder_flexion_drink_deg,
            ijc,
        )
        .unwrap();
    }
    std::fs::write(path, out)?;
    Ok(())
}

pub fn read_measure_rows(path: &Path) -> Result<Vec<MeasureRow>> {
    let text = read_to_string(path)?;
    let mut rows = Vec::new();
    for (ln, line) in text.lines().enumerate() {
        if line.starts_with('#') || line.starts_with("participant") || line.trim().is_empty() {
            continue;
        }
        let p: Vec<&str> = line.split(',').collect();
        if p.len() != 16 {
            return Err(parse_err(path, ln + 1, format!("expected 16 columns, got {}", p.len())));
        }
        let num = |k: usize| -> Result<f64> {
            p[k].parse()
                .map_err(|_| parse_err(path, ln + 1, format!("bad number (column {})", k + 1)))
        };
        rows.push(MeasureRow {
            participant: p[0].to_string(),
            trial_id: p[1].to_string(),
            arm: Arm::parse(p[2]).ok_or_else(|| parse_err(path, ln + 1, "bad arm (column 3)"))?,
            system: p[3].to_string(),
            measures: MeasureSet {
                total_movement_time_s: num(4)?,
                n_movement_units: p[5]
                    .parse()
                    .map_err(|_| parse_err(path, ln + 1, "bad count (column 6)"))?,
                peak_velocity_m_s: num(6)?,
                elbow_angular_pv_deg_s: num(7)?,
                time_to_pv_s: num(8)?,
                time_to_first_pv_s: num(9)?,
                max_elbow_extension_deg: num(10)?,
                max_shoulder_abduction_deg: num(11)?,
                max_trunk_displacement_mm: num(12)?,
                max_shoulder_flexion_reach_deg: num(13)?,
                max_shoulder_flexion_drink_deg: num(14)?,
                interjoint_coordination: if p[15] == "missing" {
                    None
                } else {
                    Some(num(15)?)
                },
            },
        });
    }
    Ok(rows)
}

// ---------------------------------------------------------------------------
// Trial comparison rows
// ---------------------------------------------------------------------------

pub fn write_comparisons(path: &Path, trials: &[TrialComparison]) -> Result<()> {
    let mut out = String::new();
    writeln!(out, "# armcap-compare-v1").unwrap();
    writeln!(out, "participant,trial_id,arm,channel,bias,lag_s,rmse,r").unwrap();
    for t in trials {
        for c in &t.channels {
            let r = c.r.map(|v| format!("{v}")).unwrap_or_else(|| "missing".into());
            writeln!(
                out,
                "{},{},{},{},{},{},{},{}",
                t.participant,
                t.trial_id,
                t.arm.name(),
                c.channel.name(),
                c.bias,
                c.lag_s,
                c.rmse,
                r
            )
            .unwrap();
        }
    }
    std::fs::write(path, out)?;
    Ok(())
}

pub fn read_comparisons(path: &Path) -> Result<Vec<TrialComparison>> {
    let text = read_to_string(path)?;
    let mut map: BTreeMap<(String, String, Arm), Vec<crate::compare::AlignmentResult>> =
        BTreeMap::new();
    for (ln, line) in text.lines().enumerate() {
        if line.starts_with('#') || line.starts_with("participant") || line.trim().is_empty() {
            continue;
        }
        let p: Vec<&str> = line.split(',').collect();
        if p.len() != 8 {
            return Err(parse_err(path, ln + 1, format!("expected 8 columns, got {}", p.len())));
        }
        let arm = Arm::parse(p[2]).ok_or_else(|| parse_err(path, ln + 1, "bad arm (column 3)"))?;
        let channel = ChannelId::parse(p[3])
            .ok_or_else(|| parse_err(path, ln + 1, format!("unknown channel `{}` (column 4)", p[3])))?;
        let num = |k: usize| -> Result<f64> {
            p[k].parse()
                .map_err(|_| parse_err(path, ln + 1, format!("bad number (column {})", k + 1)))
        };
        map.entry((p[0].to_string(), p[1].to_string(), arm))
            .or_default()
            .push(crate::compare::AlignmentResult {
                channel,
                bias: num(4)?,
                lag_s: num(5)?,
                rmse: num(6)?,
                r: if p[7] == "missing" { None } else { Some(num(7)?) },
            });
    }
    Ok(map
        .into_iter()
        .map(|((participant, trial_id, arm), channels)| TrialComparison {
            participant,
            trial_id,
            arm,
            channels,
        })
        .collect())
}

// ---------------------------------------------------------------------------
// Report tables
// ---------------------------------------------------------------------------

/// Kinematic-trajectory agreement table: per channel and statistic, one
/// `median [q25, q75]` cell per arm.
pub fn write_table1(path: &Path, report: &AggregateReport, decimals: usize) -> Result<()> {
    let mut out = String::new();
    writeln!(out, "# armcap-table1-v1").unwrap();
    writeln!(out, "kinematic,value,unaffected_arm,affected_arm").unwrap();
    for (channel, arms) in &report.table1 {
        let cell = |arm: Arm, f: &dyn Fn(&crate::compare::ChannelAggregate) -> Option<crate::compare::MedianIqr>| {
            arms.get(&arm)
                .and_then(f)
                .map(|m| m.render(decimals))
                .unwrap_or_else(|| "missing".into())
        };
        let unit = channel.unit();
        let rows: [(&str, Box<dyn Fn(&crate::compare::ChannelAggregate) -> Option<crate::compare::MedianIqr>>); 4] = [
            ("r", Box::new(|a| a.r)),
            ("rmse", Box::new(|a| a.rmse)),
            ("bias", Box::new(|a| a.bias)),
            ("time_lag_s", Box::new(|a| a.lag_s)),
        ];
        for (label, getter) in rows {
            let label = match label {
                "r" => "r".to_string(),
                "time_lag_s" => "time_lag_s".to_string(),
                other => format!("{other}_{unit}"),
            };
            writeln!(
                out,
                "{},{},{},{}",
                channel.name(),
                label,
                cell(Arm::Unaffected, getter.as_ref()),
                cell(Arm::Affected, getter.as_ref()),
            )
            .unwrap();
        }
    }
    std::fs::write(path, out)?;
    Ok(())
}

/// Mean within-participant bias IQR per channel and arm.
pub fn write_table2(path: &Path, report: &AggregateReport, decimals: usize) -> Result<()> {
    let mut out = String::new();
    writeln!(out, "# armcap-table2-v1").unwrap();
    writeln!(out, "kinematic,bias,unaffected_arm,affected_arm").unwrap();
    for (channel, arms) in &report.table2 {
        let cell = |arm: Arm| {
            arms.get(&arm)
                .map(|v| format!("{v:.d$}", d = decimals))
                .unwrap_or_else(|| "missing".into())
        };
        writeln!(
            out,
            "{},mean_iqr_{},{},{}",
            channel.name(),
            channel.unit(),
            cell(Arm::Unaffected),
            cell(Arm::Affected)
        )
        .unwrap();
    }
    std::fs::write(path, out)?;
    Ok(())
}

/// Movement-quality correlations: `r_s` (per trial) and `r_av`
/// (per-participant averages) per measure.
pub fn write_table3(path: &Path, correlations: &[MeasureCorrelation], decimals: usize) -> Result<()> {
    let mut out = String::new();
    writeln!(out, "# armcap-table3-v1").unwrap();
    writeln!(out, "movement_quality_measure,r_s,r_av").unwrap();
    for c in correlations {
        let fmt = |v: Option<f64>| {
            v.map(|x| format!("{x:.d$}", d = decimals))
                .unwrap_or_else(|| "missing".into())
        };
        writeln!(out, "{},{},{}", c.measure, fmt(c.r_s), fmt(c.r_av)).unwrap();
    }
    std::fs::write(path, out)?;
    Ok(())
}

/// Paired per-trial measure values for correlation plots.
pub fn write_measure_points(path: &Path, pairs: &[MeasurePair]) -> Result<()> {
    let mut out = String::new();
    writeln!(out, "# armcap-measure-points-v1").unwrap();
    writeln!(out, "measure,participant,trial_id,arm,value_mmc,value_omc").unwrap();
    for p in pairs {
        writeln!(
            out,
            "{},{},{},{},{},{}",
            p.measure,
            p.participant,
            p.trial_id,
            p.arm.name(),
            p.value_a,
            p.value_b
        )
        .unwrap();
    }
    std::fs::write(path, out)?;
    Ok(())
}
