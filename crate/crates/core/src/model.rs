//! Parametric upper-body kinematic chain and forward kinematics.
//!
//! The model is a tree of rigid segments rooted at the trunk. Each segment
//! attaches to its parent at a joint whose ordered degrees of freedom rotate
//! about (or translate along) fixed local axes. Per-segment scale factors
//! stretch both the placement of child joints and the marker offsets carried
//! by the segment, so one scalar per segment controls "bone length".
//!
//! # DOF order
//!
//! The flat angle vector follows segment definition order, then each joint's
//! DOF order. For [`build_default_upper_body`] with `Side::Bilateral`:
//!
//! ```text
//!  0..3   trunk translation x, y, z      (meters, world frame)
//!  3..6   trunk rotation x, y, z         (intrinsic, applied in order)
//!  6..9   right shoulder flexion, abduction, internal rotation
//!  9..11  right elbow flexion, pronation
//! 11..13  right wrist flexion, deviation
//! 13..20  left arm, same order as right
//! ```
//!
//! Unilateral models drop the opposite arm (13 DOFs). Axes use a Z-up,
//! X-forward, Y-left body frame; arms hang along -Z in the neutral pose.

use serde::{Deserialize, Serialize};

use crate::ad::Real;
use crate::error::{Error, Result};
use crate::math::{Mat3, Vec3};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DofKind {
    Rotation,
    Translation,
}

/// One degree of freedom: a fixed unit axis in the joint's local frame.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct DofSpec {
    pub name: String,
    pub axis: [f64; 3],
    pub kind: DofKind,
    /// Radians for rotations, meters for translations.
    pub limits: (f64, f64),
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct SegmentSpec {
    pub id: String,
    /// Parent segment id; `None` for the root.
    pub parent: Option<String>,
    /// Joint position in the parent frame at scale 1.
    pub neutral_offset: [f64; 3],
    pub scalable: bool,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct JointSpec {
    pub segment: String,
    pub dofs: Vec<DofSpec>,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct MarkerSpec {
    pub id: String,
    pub segment: String,
    /// Marker position in the segment frame at scale 1, meters.
    pub local_offset: [f64; 3],
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Side {
    Left,
    Right,
    Bilateral,
}

impl std::str::FromStr for Side {
    type Err = String;
    fn from_str(s: &str) -> std::result::Result<Self, Self::Err> {
        match s {
            "left" => Ok(Side::Left),
            "right" => Ok(Side::Right),
            "bilateral" => Ok(Side::Bilateral),
            other => Err(format!("unknown side `{other}`")),
        }
    }
}

/// Validated kinematic tree with joints and markers.
///
/// Construction (and deserialization through [`BodyModel::from_parts`])
/// checks the tree and ID invariants, and precomputes parent indices and the
/// flat DOF layout.
#[derive(Clone, Debug, Serialize)]
pub struct BodyModel {
    pub segments: Vec<SegmentSpec>,
    pub joints: Vec<JointSpec>,
    pub markers: Vec<MarkerSpec>,
    #[serde(skip)]
    parent_idx: Vec<Option<usize>>,
    #[serde(skip)]
    marker_seg_idx: Vec<usize>,
    #[serde(skip)]
    dof_offset: Vec<usize>,
    #[serde(skip)]
    n_dofs: usize,
}

impl<'de> Deserialize<'de> for BodyModel {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        #[derive(Deserialize)]
        struct Raw {
            segments: Vec<SegmentSpec>,
            joints: Vec<JointSpec>,
            markers: Vec<MarkerSpec>,
        }
        let raw = Raw::deserialize(d)?;
        BodyModel::from_parts(raw.segments, raw.joints, raw.markers)
            .map_err(serde::de::Error::custom)
    }
}

impl BodyModel {
    pub fn from_parts(
        segments: Vec<SegmentSpec>,
        joints: Vec<JointSpec>,
        markers: Vec<MarkerSpec>,
    ) -> Result<Self> {
        let seg_index = |id: &str| segments.iter().position(|s| s.id == id);

        let mut parent_idx = Vec::with_capacity(segments.len());
        let mut n_roots = 0;
        for (i, seg) in segments.iter().enumerate() {
            if segments.iter().take(i).any(|s| s.id == seg.id) {
                return Err(Error::InvalidModel(format!("duplicate segment `{}`", seg.id)));
            }
            if !seg.neutral_offset.iter().all(|v| v.is_finite()) {
                return Err(Error::InvalidModel(format!(
                    "non-finite neutral offset on `{}`",
                    seg.id
                )));
            }
            match &seg.parent {
                None => {
                    n_roots += 1;
                    parent_idx.push(None);
                }
                Some(p) => {
                    let pi = seg_index(p).ok_or_else(|| {
                        Error::InvalidModel(format!("segment `{}` has unknown parent `{p}`", seg.id))
                    })?;
                    if pi >= i {
                        return Err(Error::InvalidModel(format!(
                            "segment `{}` must be defined after its parent",
                            seg.id
                        )));
                    }
                    parent_idx.push(Some(pi));
                }
            }
        }
        if n_roots != 1 {
            return Err(Error::InvalidModel(format!("expected 1 root, found {n_roots}")));
        }

        // One joint per segment, in segment order; this fixes the DOF layout.
        if joints.len() != segments.len() {
            return Err(Error::InvalidModel(format!(
                "expected one joint per segment ({}), got {}",
                segments.len(),
                joints.len()
            )));
        }
        let mut dof_offset = Vec::with_capacity(joints.len());
        let mut n_dofs = 0;
        for (joint, seg) in joints.iter().zip(&segments) {
            if joint.segment != seg.id {
                return Err(Error::InvalidModel(format!(
                    "joint order mismatch: `{}` vs segment `{}`",
                    joint.segment, seg.id
                )));
            }
            for dof in &joint.dofs {
                let n = (dof.axis[0] * dof.axis[0]
                    + dof.axis[1] * dof.axis[1]
                    + dof.axis[2] * dof.axis[2])
                    .sqrt();
                if (n - 1.0).abs() > 1e-9 {
                    return Err(Error::InvalidModel(format!(
                        "axis of `{}` is not unit length",
                        dof.name
                    )));
                }
                if !(dof.limits.0 < dof.limits.1) {
                    return Err(Error::InvalidModel(format!(
                        "limits of `{}` are not ordered",
                        dof.name
                    )));
                }
            }
            dof_offset.push(n_dofs);
            n_dofs += joint.dofs.len();
        }

        let mut marker_seg_idx = Vec::with_capacity(markers.len());
        for (i, m) in markers.iter().enumerate() {
            if markers.iter().take(i).any(|o| o.id == m.id) {
                return Err(Error::InvalidModel(format!("duplicate marker `{}`", m.id)));
            }
            let si = seg_index(&m.segment).ok_or_else(|| {
                Error::InvalidModel(format!("marker `{}` references unknown segment", m.id))
            })?;
            marker_seg_idx.push(si);
        }

        Ok(BodyModel {
            segments,
            joints,
            markers,
            parent_idx,
            marker_seg_idx,
            dof_offset,
            n_dofs,
        })
    }

    pub fn n_dofs(&self) -> usize {
        self.n_dofs
    }

    pub fn n_segments(&self) -> usize {
        self.segments.len()
    }

    pub fn n_markers(&self) -> usize {
        self.markers.len()
    }

    pub fn parent_of(&self, segment: usize) -> Option<usize> {
        self.parent_idx[segment]
    }

    pub fn marker_segment(&self, marker: usize) -> usize {
        self.marker_seg_idx[marker]
    }

    pub fn marker_index(&self, id: &str) -> Option<usize> {
        self.markers.iter().position(|m| m.id == id)
    }

    pub fn dof_names(&self) -> Vec<String> {
        self.joints
            .iter()
            .flat_map(|j| j.dofs.iter().map(|d| d.name.clone()))
            .collect()
    }

    pub fn dof_index(&self, name: &str) -> Option<usize> {
        let mut i = 0;
        for j in &self.joints {
            for d in &j.dofs {
                if d.name == name {
                    return Some(i);
                }
                i += 1;
            }
        }
        None
    }

    /// `(min, max)` per DOF in flat order.
    pub fn dof_limits(&self) -> Vec<(f64, f64)> {
        self.joints
            .iter()
            .flat_map(|j| j.dofs.iter().map(|d| d.limits))
            .collect()
    }

    /// Clamp a flat angle vector into the joint limits.
    pub fn clamp_to_limits(&self, theta: &mut [f64]) {
        for (v, (lo, hi)) in theta.iter_mut().zip(self.dof_limits()) {
            *v = v.clamp(lo, hi);
        }
    }

    /// Indices of scalable segments (the entries of [`ScaleParams`] that a
    /// fit is allowed to move; the rest stay pinned at 1).
    pub fn scalable_segments(&self) -> Vec<usize> {
        (0..self.segments.len())
            .filter(|&i| self.segments[i].scalable)
            .collect()
    }
}

/// Per-segment scale factors, aligned with `model.segments`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ScaleParams(pub Vec<f64>);

impl ScaleParams {
    pub fn uniform(model: &BodyModel, s: f64) -> Self {
        ScaleParams(vec![s; model.n_segments()])
    }

    pub fn identity(model: &BodyModel) -> Self {
        Self::uniform(model, 1.0)
    }

    pub fn validate(&self, model: &BodyModel) -> Result<()> {
        if self.0.len() != model.n_segments() {
            return Err(Error::DimensionMismatch {
                context: "scale params",
                expected: model.n_segments(),
                got: self.0.len(),
            });
        }
        if self.0.iter().any(|&s| !(s > 0.0) || !s.is_finite()) {
            return Err(Error::InvalidModel("scale factors must be positive".into()));
        }
        Ok(())
    }
}

/// Per-marker local-offset corrections in meters, aligned with
/// `model.markers`. Components are bounded by the configured radius to keep
/// corrections in the soft-tissue regime.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MarkerOffsets(pub Vec<[f64; 3]>);

/// Default bound on each offset component, meters.
pub const DEFAULT_OFFSET_RADIUS_M: f64 = 0.05;

impl MarkerOffsets {
    pub fn zero(model: &BodyModel) -> Self {
        MarkerOffsets(vec![[0.0; 3]; model.n_markers()])
    }

    pub fn validate(&self, model: &BodyModel, radius: f64) -> Result<()> {
        if self.0.len() != model.n_markers() {
            return Err(Error::DimensionMismatch {
                context: "marker offsets",
                expected: model.n_markers(),
                got: self.0.len(),
            });
        }
        for off in &self.0 {
            if off.iter().any(|c| !c.is_finite() || c.abs() > radius + 1e-12) {
                return Err(Error::InvalidModel(format!(
                    "marker offset {off:?} exceeds the {radius} m bound"
                )));
            }
        }
        Ok(())
    }
}

/// Flat DOF vector; radians for rotations, meters for root translations.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct JointAngles(pub Vec<f64>);

impl JointAngles {
    pub fn zeros(model: &BodyModel) -> Self {
        JointAngles(vec![0.0; model.n_dofs()])
    }
}

/// World-frame marker positions in `model.markers` order. Entries are `None`
/// for markers that could not be measured (e.g. too few cameras for
/// triangulation); forward kinematics always produces complete clouds.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MarkerCloud(pub Vec<Option<[f64; 3]>>);

impl MarkerCloud {
    pub fn complete(&self) -> bool {
        self.0.iter().all(|p| p.is_some())
    }
}

/// World pose (rotation + origin) of every segment, generic over the scalar.
pub struct SegmentPoses<S> {
    pub rotation: Vec<Mat3<S>>,
    pub origin: Vec<Vec3<S>>,
}

/// Pose every segment given scales and the flat angle vector.
///
/// DOFs are applied in order within each joint: a translation DOF moves the
/// joint origin along its axis expressed in the frame accumulated so far; a
/// rotation DOF composes a Rodrigues rotation about its axis.
pub fn segment_poses<S: Real>(
    model: &BodyModel,
    scale: &[S],
    theta: &[S],
) -> Result<SegmentPoses<S>> {
    if theta.len() != model.n_dofs() {
        return Err(Error::DimensionMismatch {
            context: "joint angles",
            expected: model.n_dofs(),
            got: theta.len(),
        });
    }
    if scale.len() != model.n_segments() {
        return Err(Error::DimensionMismatch {
            context: "scale params",
            expected: model.n_segments(),
            got: scale.len(),
        });
    }

    let identity = |one: f64| Mat3 {
        m: [
            [one * 1.0, one * 0.0, one * 0.0],
            [one * 0.0, one * 1.0, one * 0.0],
            [one * 0.0, one * 0.0, one * 1.0],
        ],
    };
    let _ = identity; // only used below through explicit construction

    let mut rotation: Vec<Mat3<S>> = Vec::with_capacity(model.n_segments());
    let mut origin: Vec<Vec3<S>> = Vec::with_capacity(model.n_segments());

    for (si, seg) in model.segments.iter().enumerate() {
        // Start from the parent pose with the joint placed at the scaled
        // neutral offset.
        let (mut rot, mut org) = match model.parent_idx[si] {
            None => {
                // Root: identity rotation at the world origin. Build the
                // identity from any scalar by zeroing a theta entry.
                let zero = theta[0] * 0.0;
                let one = zero + 1.0;
                let rot = Mat3 {
                    m: [
                        [one, zero, zero],
                        [zero, one, zero],
                        [zero, zero, one],
                    ],
                };
                (rot, Vec3::new(zero, zero, zero))
            }
            Some(pi) => {
                let local = Vec3::new(
                    scale[pi] * seg.neutral_offset[0],
                    scale[pi] * seg.neutral_offset[1],
                    scale[pi] * seg.neutral_offset[2],
                );
                let org = origin[pi].add(rotation[pi].mul_vec(local));
                (rotation[pi], org)
            }
        };

        let joint = &model.joints[si];
        let base = model.dof_offset[si];
        for (k, dof) in joint.dofs.iter().enumerate() {
            let q = theta[base + k];
            match dof.kind {
                DofKind::Translation => {
                    let step = Vec3::new(q * dof.axis[0], q * dof.axis[1], q * dof.axis[2]);
                    org = org.add(rot.mul_vec(step));
                }
                DofKind::Rotation => {
                    rot = rot.mul(Mat3::rotation(dof.axis, q));
                }
            }
        }

        rotation.push(rot);
        origin.push(org);
    }

    Ok(SegmentPoses { rotation, origin })
}

/// Forward kinematics: world positions of all model markers.
///
/// `offsets` is the flat per-marker correction (3 scalars per marker, meters,
/// added to the local offset before scaling). Pure and deterministic;
/// differentiable in `theta`, `scale`, and `offsets` when instantiated over
/// taped variables.
pub fn forward_kinematics<S: Real>(
    model: &BodyModel,
    scale: &[S],
    offsets: &[S],
    theta: &[S],
) -> Result<Vec<Vec3<S>>> {
    if offsets.len() != model.n_markers() * 3 {
        return Err(Error::DimensionMismatch {
            context: "marker offsets",
            expected: model.n_markers() * 3,
            got: offsets.len(),
        });
    }
    let poses = segment_poses(model, scale, theta)?;
    let mut out = Vec::with_capacity(model.n_markers());
    for (mi, marker) in model.markers.iter().enumerate() {
        let si = model.marker_seg_idx[mi];
        let local = Vec3::new(
            (offsets[mi * 3] + marker.local_offset[0]) * scale[si],
            (offsets[mi * 3 + 1] + marker.local_offset[1]) * scale[si],
            (offsets[mi * 3 + 2] + marker.local_offset[2]) * scale[si],
        );
        out.push(poses.origin[si].add(poses.rotation[si].mul_vec(local)));
    }
    Ok(out)
}

/// Plain-`f64` convenience wrapper returning a [`MarkerCloud`].
pub fn fk_cloud(
    model: &BodyModel,
    scale: &ScaleParams,
    offsets: &MarkerOffsets,
    theta: &JointAngles,
) -> Result<MarkerCloud> {
    scale.validate(model)?;
    let flat: Vec<f64> = offsets.0.iter().flatten().copied().collect();
    let pts = forward_kinematics(model, &scale.0, &flat, &theta.0)?;
    Ok(MarkerCloud(pts.into_iter().map(|p| Some(p.values())).collect()))
}

fn arm_segments(side: char, shoulder_y: f64) -> Vec<SegmentSpec> {
    vec![
        SegmentSpec {
            id: format!("upper_arm_{side}"),
            parent: Some("trunk".into()),
            neutral_offset: [0.0, shoulder_y, 0.45],
            scalable: true,
        },
        SegmentSpec {
            id: format!("forearm_{side}"),
            parent: Some(format!("upper_arm_{side}")),
            neutral_offset: [0.0, 0.0, -0.30],
            scalable: true,
        },
        SegmentSpec {
            id: format!("hand_{side}"),
            parent: Some(format!("forearm_{side}")),
            neutral_offset: [0.0, 0.0, -0.26],
            scalable: true,
        },
    ]
}

fn arm_joints(side: char) -> Vec<JointSpec> {
    let deg = |d: f64| d.to_radians();
    vec![
        JointSpec {
            segment: format!("upper_arm_{side}"),
            dofs: vec![
                DofSpec {
                    name: format!("shoulder_flexion_{side}"),
                    axis: [0.0, 1.0, 0.0],
                    kind: DofKind::Rotation,
                    limits: (deg(-60.0), deg(180.0)),
                },
                DofSpec {
                    name: format!("shoulder_abduction_{side}"),
                    // Mirrored so positive abduction moves either arm away
                    // from the trunk.
                    axis: [if side == 'r' { -1.0 } else { 1.0 }, 0.0, 0.0],
                    kind: DofKind::Rotation,
                    limits: (deg(-30.0), deg(180.0)),
                },
                DofSpec {
                    name: format!("shoulder_rotation_{side}"),
                    axis: [0.0, 0.0, 1.0],
                    kind: DofKind::Rotation,
                    limits: (deg(-90.0), deg(90.0)),
                },
            ],
        },
        JointSpec {
            segment: format!("forearm_{side}"),
            dofs: vec![
                DofSpec {
                    name: format!("elbow_flexion_{side}"),
                    axis: [0.0, 1.0, 0.0],
                    kind: DofKind::Rotation,
                    limits: (deg(0.0), deg(150.0)),
                },
                DofSpec {
                    name: format!("elbow_pronation_{side}"),
                    axis: [0.0, 0.0, 1.0],
                    kind: DofKind::Rotation,
                    limits: (deg(-90.0), deg(90.0)),
                },
            ],
        },
        JointSpec {
            segment: format!("hand_{side}"),
            dofs: vec![
                DofSpec {
                    name: format!("wrist_flexion_{side}"),
                    axis: [0.0, 1.0, 0.0],
                    kind: DofKind::Rotation,
                    limits: (deg(-80.0), deg(80.0)),
                },
                DofSpec {
                    name: format!("wrist_deviation_{side}"),
                    axis: [1.0, 0.0, 0.0],
                    kind: DofKind::Rotation,
                    limits: (deg(-30.0), deg(30.0)),
                },
            ],
        },
    ]
}

fn arm_markers(side: char) -> Vec<MarkerSpec> {
    let sy = if side == 'r' { -1.0 } else { 1.0 };
    vec![
        MarkerSpec {
            id: format!("shoulder_{side}"),
            segment: format!("upper_arm_{side}"),
            local_offset: [0.0, sy * 0.04, 0.03],
        },
        MarkerSpec {
            id: format!("elbow_{side}"),
            segment: format!("forearm_{side}"),
            local_offset: [0.0, sy * 0.035, 0.0],
        },
        MarkerSpec {
            id: format!("wrist_rad_{side}"),
            segment: format!("hand_{side}"),
            local_offset: [0.01, sy * -0.028, 0.0],
        },
        MarkerSpec {
            id: format!("wrist_uln_{side}"),
            segment: format!("hand_{side}"),
            local_offset: [-0.012, sy * 0.028, 0.0],
        },
        MarkerSpec {
            id: format!("hand_{side}"),
            segment: format!("hand_{side}"),
            local_offset: [0.02, 0.0, -0.07],
        },
    ]
}

/// Build the default upper-body chain: a 6-DOF trunk root plus, per arm, a
/// 3-DOF shoulder, 2-DOF elbow, and 2-DOF wrist (7 DOFs per arm, 20 total
/// bilaterally). Markers: sternum plus shoulder, elbow, radial/ulnar styloid,
/// and hand per arm.
pub fn build_default_upper_body(side: Side) -> BodyModel {
    let deg = |d: f64| d.to_radians();

    let mut segments = vec![SegmentSpec {
        id: "trunk".into(),
        parent: None,
        neutral_offset: [0.0, 0.0, 0.0],
        scalable: true,
    }];
    let mut joints = vec![JointSpec {
        segment: "trunk".into(),
        dofs: vec![
            DofSpec {
                name: "trunk_tx".into(),
                axis: [1.0, 0.0, 0.0],
                kind: DofKind::Translation,
                limits: (-1.0, 1.0),
            },
            DofSpec {
                name: "trunk_ty".into(),
                axis: [0.0, 1.0, 0.0],
                kind: DofKind::Translation,
                limits: (-1.0, 1.0),
            },
            DofSpec {
                name: "trunk_tz".into(),
                axis: [0.0, 0.0, 1.0],
                kind: DofKind::Translation,
                limits: (-1.0, 1.0),
            },
            DofSpec {
                name: "trunk_rx".into(),
                axis: [1.0, 0.0, 0.0],
                kind: DofKind::Rotation,
                limits: (deg(-45.0), deg(45.0)),
            },
            DofSpec {
                name: "trunk_ry".into(),
                axis: [0.0, 1.0, 0.0],
                kind: DofKind::Rotation,
                limits: (deg(-45.0), deg(45.0)),
            },
            DofSpec {
                name: "trunk_rz".into(),
                axis: [0.0, 0.0, 1.0],
                kind: DofKind::Rotation,
                limits: (deg(-45.0), deg(45.0)),
            },
        ],
    }];
    // Three non-collinear trunk markers pin the 6-DOF root even when only
    // one arm is modeled.
    let mut markers = vec![
        MarkerSpec {
            id: "sternum".into(),
            segment: "trunk".into(),
            local_offset: [0.09, 0.0, 0.38],
        },
        MarkerSpec {
            id: "c7".into(),
            segment: "trunk".into(),
            local_offset: [-0.07, 0.0, 0.46],
        },
        MarkerSpec {
            id: "t10".into(),
            segment: "trunk".into(),
            local_offset: [-0.08, 0.0, 0.25],
        },
    ];

    let sides: &[char] = match side {
        Side::Right => &['r'],
        Side::Left => &['l'],
        Side::Bilateral => &['r', 'l'],
    };
    for &s in sides {
        let shoulder_y = if s == 'r' { -0.20 } else { 0.20 };
        segments.extend(arm_segments(s, shoulder_y));
        joints.extend(arm_joints(s));
        markers.extend(arm_markers(s));
    }

    BodyModel::from_parts(segments, joints, markers).expect("default model is valid")
}
