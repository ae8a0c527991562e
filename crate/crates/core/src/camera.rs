//! Pinhole cameras: projection with Brown-Conrady distortion, undistortion,
//! and confidence-weighted linear triangulation.

use nalgebra::{DMatrix, DVector, Matrix3, Vector3};
use serde::{Deserialize, Serialize};

use crate::ad::Real;
use crate::error::{Error, Result};
use crate::math::{mat3_f64_mul_vec, Vec3};

/// Minimum camera-frame depth accepted by [`project`], meters.
pub const MIN_DEPTH_M: f64 = 1e-6;

/// Default confidence below which an observation is treated as missing.
pub const DEFAULT_CONFIDENCE_FLOOR: f64 = 0.3;

#[derive(Clone, Copy, Debug, Serialize, Deserialize)]
pub struct CameraIntrinsics {
    pub fx: f64,
    pub fy: f64,
    pub cx: f64,
    pub cy: f64,
    /// Brown-Conrady coefficients `[k1, k2, p1, p2, k3]`.
    pub dist: [f64; 5],
}

impl CameraIntrinsics {
    pub fn validate(&self) -> Result<()> {
        if self.fx <= 0.0 || self.fy <= 0.0 {
            return Err(Error::Config(format!(
                "focal lengths must be positive, got fx={} fy={}",
                self.fx, self.fy
            )));
        }
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, Serialize, Deserialize)]
pub struct CameraExtrinsics {
    /// World-to-camera rotation, row-major.
    pub rotation: [[f64; 3]; 3],
    /// World-to-camera translation, meters.
    pub translation: [f64; 3],
}

impl CameraExtrinsics {
    pub fn validate(&self) -> Result<()> {
        let r = Matrix3::from_fn(|i, j| self.rotation[i][j]);
        let dev = (r.transpose() * r - Matrix3::identity()).norm();
        if dev >= 1e-9 {
            return Err(Error::Config(format!(
                "rotation is not orthonormal (deviation {dev:.2e})"
            )));
        }
        if (r.determinant() - 1.0).abs() > 1e-9 {
            return Err(Error::Config("rotation determinant is not +1".into()));
        }
        Ok(())
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct Camera {
    pub id: String,
    pub image_size: [u32; 2],
    pub intrinsics: CameraIntrinsics,
    pub extrinsics: CameraExtrinsics,
}

/// Ordered set of calibrated cameras.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct CameraRig {
    pub cameras: Vec<Camera>,
}

impl CameraRig {
    pub fn validate(&self) -> Result<()> {
        for (i, cam) in self.cameras.iter().enumerate() {
            if self.cameras.iter().take(i).any(|c| c.id == cam.id) {
                return Err(Error::Config(format!("duplicate camera id `{}`", cam.id)));
            }
            if cam.image_size[0] == 0 || cam.image_size[1] == 0 {
                return Err(Error::Config(format!("camera `{}` has empty image", cam.id)));
            }
            cam.intrinsics.validate()?;
            cam.extrinsics.validate()?;
        }
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.cameras.len()
    }

    pub fn is_empty(&self) -> bool {
        self.cameras.is_empty()
    }
}

/// A 2D keypoint detection in one camera.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Observation2D {
    pub u: f64,
    pub v: f64,
    pub confidence: f64,
}

impl Observation2D {
    pub fn usable(&self, floor: f64) -> bool {
        self.confidence >= floor && self.u.is_finite() && self.v.is_finite()
    }
}

/// Apply Brown-Conrady distortion to normalized image coordinates.
pub fn distort<S: Real>(dist: &[f64; 5], x: S, y: S) -> (S, S) {
    let [k1, k2, p1, p2, k3] = *dist;
    let r2 = x * x + y * y;
    let radial = ((r2 * k3 + k2) * r2 + k1) * r2 + 1.0;
    let xy = x * y;
    let xd = x * radial + xy * (2.0 * p1) + (r2 + x * x * 2.0) * p2;
    let yd = y * radial + (r2 + y * y * 2.0) * p1 + xy * (2.0 * p2);
    (xd, yd)
}

/// Invert [`distort`] by fixed-point iteration (converges for the mild
/// distortion this family models; ≤ 25 iterations, tolerance 1e-15).
pub fn undistort(dist: &[f64; 5], xd: f64, yd: f64) -> (f64, f64) {
    let mut x = xd;
    let mut y = yd;
    for _ in 0..25 {
        let [k1, k2, p1, p2, k3] = *dist;
        let r2 = x * x + y * y;
        let radial = 1.0 + k1 * r2 + k2 * r2 * r2 + k3 * r2 * r2 * r2;
        let dx = 2.0 * p1 * x * y + p2 * (r2 + 2.0 * x * x);
        let dy = p1 * (r2 + 2.0 * y * y) + 2.0 * p2 * x * y;
        let xn = (xd - dx) / radial;
        let yn = (yd - dy) / radial;
        let delta = (xn - x).abs().max((yn - y).abs());
        x = xn;
        y = yn;
        if delta < 1e-15 {
            break;
        }
    }
    (x, y)
}

/// Project a world point to pixels. Differentiable with respect to the point;
/// camera parameters are plain constants.
pub fn project<S: Real>(
    intrinsics: &CameraIntrinsics,
    extrinsics: &CameraExtrinsics,
    point: Vec3<S>,
) -> Result<(S, S)> {
    let t = extrinsics.translation;
    let pc = mat3_f64_mul_vec(&extrinsics.rotation, point);
    let xc = pc.x + t[0];
    let yc = pc.y + t[1];
    let zc = pc.z + t[2];
    let depth = zc.val();
    if depth < MIN_DEPTH_M {
        return Err(Error::BehindCamera { depth });
    }
    let x = xc / zc;
    let y = yc / zc;
    let (xd, yd) = distort(&intrinsics.dist, x, y);
    Ok((
        xd * intrinsics.fx + intrinsics.cx,
        yd * intrinsics.fy + intrinsics.cy,
    ))
}

/// Pixel coordinates to undistorted normalized coordinates.
pub fn pixel_to_normalized(intr: &CameraIntrinsics, u: f64, v: f64) -> (f64, f64) {
    let xd = (u - intr.cx) / intr.fx;
    let yd = (v - intr.cy) / intr.fy;
    undistort(&intr.dist, xd, yd)
}

/// Result of a triangulation: the point and the RMS pixel residual over the
/// cameras that contributed.
#[derive(Clone, Copy, Debug)]
pub struct Triangulated {
    pub point: [f64; 3],
    pub rms_px: f64,
    pub n_cameras: usize,
}

/// Confidence-weighted linear triangulation on undistorted normalized rays.
///
/// `observations[i]` pairs with `rig.cameras[i]`; `None` or low-confidence
/// entries are skipped. Weights are squared confidences, so the result is
/// invariant to uniform confidence scaling.
pub fn triangulate(
    rig: &CameraRig,
    observations: &[Option<Observation2D>],
    min_cameras: usize,
    confidence_floor: f64,
) -> Result<Triangulated> {
    if observations.len() != rig.len() {
        return Err(Error::DimensionMismatch {
            context: "triangulation observations",
            expected: rig.len(),
            got: observations.len(),
        });
    }
    let usable: Vec<(usize, Observation2D)> = observations
        .iter()
        .enumerate()
        .filter_map(|(i, o)| o.filter(|o| o.usable(confidence_floor)).map(|o| (i, o)))
        .collect();
    let needed = min_cameras.max(2);
    if usable.len() < needed {
        return Err(Error::Underdetermined {
            needed,
            got: usable.len(),
        });
    }

    let mut a = DMatrix::<f64>::zeros(2 * usable.len(), 3);
    let mut b = DVector::<f64>::zeros(2 * usable.len());
    for (row, (ci, obs)) in usable.iter().enumerate() {
        let cam = &rig.cameras[*ci];
        let (x, y) = pixel_to_normalized(&cam.intrinsics, obs.u, obs.v);
        let r = &cam.extrinsics.rotation;
        let t = &cam.extrinsics.translation;
        let w = obs.confidence * obs.confidence;
        for j in 0..3 {
            a[(2 * row, j)] = w * (x * r[2][j] - r[0][j]);
            a[(2 * row + 1, j)] = w * (y * r[2][j] - r[1][j]);
        }
        b[2 * row] = w * (t[0] - x * t[2]);
        b[2 * row + 1] = w * (t[1] - y * t[2]);
    }

    let svd = a.svd(true, true);
    let sol = svd
        .solve(&b, 1e-12)
        .map_err(|e| Error::Config(format!("triangulation solve failed: {e}")))?;
    let point = [sol[0], sol[1], sol[2]];

    let mut sq = 0.0;
    let mut n = 0usize;
    for (ci, obs) in &usable {
        let cam = &rig.cameras[*ci];
        if let Ok((u, v)) = project(
            &cam.intrinsics,
            &cam.extrinsics,
            Vec3::new(point[0], point[1], point[2]),
        ) {
            sq += (u - obs.u).powi(2) + (v - obs.v).powi(2);
            n += 1;
        }
    }
    let rms_px = if n > 0 { (sq / n as f64).sqrt() } else { f64::NAN };

    Ok(Triangulated {
        point,
        rms_px,
        n_cameras: usable.len(),
    })
}

/// Evenly space `n` cameras on an arc of `arc_deg` degrees at `radius`
/// meters, all looking at `target`. Cameras sit at `height` meters.
pub fn arc_rig(
    n: usize,
    radius: f64,
    arc_deg: f64,
    height: f64,
    target: [f64; 3],
    image_size: [u32; 2],
    focal_px: f64,
) -> CameraRig {
    let mut cameras = Vec::with_capacity(n);
    for i in 0..n {
        let frac = if n > 1 { i as f64 / (n - 1) as f64 } else { 0.5 };
        let ang = (frac - 0.5) * arc_deg.to_radians();
        // Arc in front of the subject (+X forward).
        let pos = Vector3::new(
            target[0] + radius * ang.cos(),
            target[1] + radius * ang.sin(),
            height,
        );
        let look = (Vector3::from(target) - pos).normalize();
        // Camera frame: +Z along view direction, +X right, +Y down.
        let world_up = Vector3::new(0.0, 0.0, 1.0);
        let right = look.cross(&world_up).normalize();
        let down = look.cross(&right).normalize();
        // Rows of R are the camera axes in world coordinates.
        let rotation = [
            [right.x, right.y, right.z],
            [down.x, down.y, down.z],
            [look.x, look.y, look.z],
        ];
        let rt = Matrix3::from_fn(|r, c| rotation[r][c]);
        let t = -(rt * pos);
        cameras.push(Camera {
            id: format!("cam{i:02}"),
            image_size,
            intrinsics: CameraIntrinsics {
                fx: focal_px,
                fy: focal_px,
                cx: image_size[0] as f64 / 2.0,
                cy: image_size[1] as f64 / 2.0,
                dist: [0.0; 5],
            },
            extrinsics: CameraExtrinsics {
                rotation,
                translation: [t.x, t.y, t.z],
            },
        });
    }
    CameraRig { cameras }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use nalgebra::Vector3;
    use proptest::prelude::*;
    use rand::rngs::StdRng;
    use rand::{Rng as _, SeedableRng as _};

    fn identity_cam(fx: f64, cx: f64) -> (CameraIntrinsics, CameraExtrinsics) {
        (
            CameraIntrinsics {
                fx,
                fy: fx,
                cx,
                cy: cx,
                dist: [0.0; 5],
            },
            CameraExtrinsics {
                rotation: [[1.0, 0.0, 0.0], [0.0, 1.0, 0.0], [0.0, 0.0, 1.0]],
                translation: [0.0; 3],
            },
        )
    }

    /// Independent projection oracle: multiplies out the extrinsic transform
    /// and distortion with nalgebra, term by term.
    fn project_oracle(intr: &CameraIntrinsics, extr: &CameraExtrinsics, p: [f64; 3]) -> (f64, f64) {
        let r = Matrix3::from_fn(|i, j| extr.rotation[i][j]);
        let pc = r * Vector3::from(p) + Vector3::from(extr.translation);
        let x = pc.x / pc.z;
        let y = pc.y / pc.z;
        let [k1, k2, p1, p2, k3] = intr.dist;
        let r2 = x * x + y * y;
        let radial = 1.0 + k1 * r2 + k2 * r2.powi(2) + k3 * r2.powi(3);
        let xd = x * radial + 2.0 * p1 * x * y + p2 * (r2 + 2.0 * x * x);
        let yd = y * radial + p1 * (r2 + 2.0 * y * y) + 2.0 * p2 * x * y;
        (intr.fx * xd + intr.cx, intr.fy * yd + intr.cy)
    }

    #[test]
    fn optical_axis_maps_to_principal_point() {
        let (intr, extr) = identity_cam(1200.0, 640.0);
        for depth in [0.1, 1.0, 7.5] {
            let (u, v) = project(&intr, &extr, Vec3::new(0.0, 0.0, depth)).unwrap();
            assert_relative_eq!(u, 640.0, epsilon = 1e-12);
            assert_relative_eq!(v, 640.0, epsilon = 1e-12);
        }
    }

    #[test]
    fn pinhole_formula() {
        let (mut intr, extr) = identity_cam(1000.0, 500.0);
        intr.cx = 500.0;
        intr.cy = 500.0;
        let (u, v) = project(&intr, &extr, Vec3::new(0.1, 0.0, 1.0)).unwrap();
        assert_relative_eq!(u, 600.0, epsilon = 1e-12);
        assert_relative_eq!(v, 500.0, epsilon = 1e-12);
    }

    #[test]
    fn behind_camera_is_an_error() {
        let (intr, extr) = identity_cam(1000.0, 500.0);
        let err = project(&intr, &extr, Vec3::new(0.0, 0.0, -1.0)).unwrap_err();
        assert!(matches!(err, Error::BehindCamera { .. }));
    }

    #[test]
    fn projection_matches_oracle() {
        let mut rng = StdRng::seed_from_u64(11);
        for _ in 0..200 {
            let axis = Vector3::new(
                rng.gen_range(-1.0..1.0),
                rng.gen_range(-1.0..1.0),
                rng.gen_range(-1.0..1.0),
            );
            let rot = nalgebra::Rotation3::from_axis_angle(
                &nalgebra::Unit::new_normalize(axis),
                rng.gen_range(-0.6..0.6),
            );
            let mut rotation = [[0.0; 3]; 3];
            for i in 0..3 {
                for j in 0..3 {
                    rotation[i][j] = rot[(i, j)];
                }
            }
            let extr = CameraExtrinsics {
                rotation,
                translation: [
                    rng.gen_range(-0.5..0.5),
                    rng.gen_range(-0.5..0.5),
                    rng.gen_range(1.5..4.0),
                ],
            };
            let intr = CameraIntrinsics {
                fx: rng.gen_range(800.0..1600.0),
                fy: rng.gen_range(800.0..1600.0),
                cx: 960.0,
                cy: 540.0,
                dist: [
                    rng.gen_range(-0.1..0.1),
                    rng.gen_range(-0.05..0.05),
                    rng.gen_range(-0.01..0.01),
                    rng.gen_range(-0.01..0.01),
                    rng.gen_range(-0.01..0.01),
                ],
            };
            let p = [
                rng.gen_range(-0.5..0.5),
                rng.gen_range(-0.5..0.5),
                rng.gen_range(-0.3..0.3),
            ];
            let ours = project(&intr, &extr, Vec3::new(p[0], p[1], p[2])).unwrap();
            let oracle = project_oracle(&intr, &extr, p);
            assert!((ours.0 - oracle.0).abs() < 1e-9, "{} vs {}", ours.0, oracle.0);
            assert!((ours.1 - oracle.1).abs() < 1e-9);
        }
    }

    #[test]
    fn projection_gradient_matches_finite_differences() {
        use crate::ad::value_and_grad;
        let intr = CameraIntrinsics {
            fx: 1400.0,
            fy: 1400.0,
            cx: 960.0,
            cy: 540.0,
            dist: [0.05, -0.02, 0.001, -0.001, 0.002],
        };
        let extr = CameraExtrinsics {
            rotation: [[1.0, 0.0, 0.0], [0.0, 1.0, 0.0], [0.0, 0.0, 1.0]],
            translation: [0.05, -0.1, 2.5],
        };
        let at = [0.2, -0.15, 0.1];
        let f = |p: &[f64]| {
            let (u, v) = project(&intr, &extr, Vec3::new(p[0], p[1], p[2])).unwrap();
            u * 0.7 + v * 0.3
        };
        let (_, g) = value_and_grad(&at, |p| {
            let (u, v) = project(&intr, &extr, Vec3::new(p[0], p[1], p[2])).unwrap();
            u * 0.7 + v * 0.3
        })
        .unwrap();
        for i in 0..3 {
            let h = 1e-6;
            let mut xp = at;
            xp[i] += h;
            let mut xm = at;
            xm[i] -= h;
            let fd = (f(&xp) - f(&xm)) / (2.0 * h);
            let err = (g[i] - fd).abs() / g[i].abs().max(fd.abs()).max(1e-6);
            assert!(err < 1e-5, "component {i}: {} vs {}", g[i], fd);
        }
    }

    #[test]
    fn five_camera_round_trip_recovers_point() {
        let rig = arc_rig(5, 2.5, 180.0, 1.2, [0.0, 0.0, 0.8], [1920, 1080], 1400.0);
        rig.validate().unwrap();
        let p = [0.15, -0.2, 0.95];
        let obs: Vec<Option<Observation2D>> = rig
            .cameras
            .iter()
            .map(|c| {
                let (u, v) =
                    project(&c.intrinsics, &c.extrinsics, Vec3::new(p[0], p[1], p[2])).unwrap();
                Some(Observation2D {
                    u,
                    v,
                    confidence: 1.0,
                })
            })
            .collect();
        let tri = triangulate(&rig, &obs, 2, DEFAULT_CONFIDENCE_FLOOR).unwrap();
        for k in 0..3 {
            assert!((tri.point[k] - p[k]).abs() < 1e-6);
        }
        assert!(tri.rms_px < 1e-6);
    }

    #[test]
    fn single_camera_is_underdetermined() {
        let rig = arc_rig(5, 2.5, 180.0, 1.2, [0.0, 0.0, 0.8], [1920, 1080], 1400.0);
        let mut obs: Vec<Option<Observation2D>> = vec![None; 5];
        obs[2] = Some(Observation2D {
            u: 960.0,
            v: 540.0,
            confidence: 1.0,
        });
        let err = triangulate(&rig, &obs, 2, DEFAULT_CONFIDENCE_FLOOR).unwrap_err();
        assert!(matches!(err, Error::Underdetermined { got: 1, .. }));
    }

    #[test]
    fn triangulation_invariant_to_uniform_confidence() {
        let rig = arc_rig(4, 2.0, 160.0, 1.0, [0.0, 0.0, 0.9], [1920, 1080], 1200.0);
        let p = [0.1, 0.05, 1.1];
        let mk = |conf: f64| -> Vec<Option<Observation2D>> {
            rig.cameras
                .iter()
                .map(|c| {
                    let (u, v) =
                        project(&c.intrinsics, &c.extrinsics, Vec3::new(p[0], p[1], p[2]))
                            .unwrap();
                    Some(Observation2D {
                        u,
                        v,
                        confidence: conf,
                    })
                })
                .collect()
        };
        let a = triangulate(&rig, &mk(1.0), 2, 0.3).unwrap();
        let b = triangulate(&rig, &mk(0.5), 2, 0.3).unwrap();
        for k in 0..3 {
            assert_relative_eq!(a.point[k], b.point[k], epsilon = 1e-9);
        }
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(1000))]
        /// undistort o distort is the identity for mild coefficients across
        /// the image (normalized radius up to ~0.8).
        #[test]
        fn undistort_inverts_distort(
            x in -0.55f64..0.55,
            y in -0.55f64..0.55,
            k1 in -0.1f64..0.1,
            k2 in -0.05f64..0.05,
            p1 in -0.005f64..0.005,
            p2 in -0.005f64..0.005,
        ) {
            let dist = [k1, k2, p1, p2, 0.0];
            let (xd, yd) = distort(&dist, x, y);
            let (xu, yu) = undistort(&dist, xd, yd);
            // 1e-9 px at fx = 1400 is ~7e-13 in normalized units.
            prop_assert!((xu - x).abs() < 7e-13);
            prop_assert!((yu - y).abs() < 7e-13);
        }

        /// Noise-free multi-view round trip reconstructs to < 1e-6 m.
        #[test]
        fn round_trip_under_1em6(
            px in -0.4f64..0.4,
            py in -0.4f64..0.4,
            pz in 0.5f64..1.3,
            n in 2usize..6,
        ) {
            let rig = arc_rig(n, 2.5, 170.0, 1.2, [0.0, 0.0, 0.8], [1920, 1080], 1400.0);
            let obs: Vec<Option<Observation2D>> = rig
                .cameras
                .iter()
                .map(|c| {
                    project(&c.intrinsics, &c.extrinsics, Vec3::new(px, py, pz))
                        .ok()
                        .map(|(u, v)| Observation2D { u, v, confidence: 1.0 })
                })
                .collect();
            prop_assume!(obs.iter().filter(|o| o.is_some()).count() >= 2);
            let tri = triangulate(&rig, &obs, 2, 0.3).unwrap();
            let err = ((tri.point[0]-px).powi(2) + (tri.point[1]-py).powi(2) + (tri.point[2]-pz).powi(2)).sqrt();
            prop_assert!(err < 1e-6, "error {err}");
        }
    }
}
