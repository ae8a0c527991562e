//! Small fixed-size vector/matrix helpers generic over [`Real`].
//!
//! Hand-rolled so the same kinematics and projection code runs over both
//! `f64` and taped variables; heavier linear algebra (least squares inside
//! the solvers, test oracles) uses `nalgebra` directly.

use crate::ad::Real;

#[derive(Clone, Copy, Debug)]
pub struct Vec3<S> {
    pub x: S,
    pub y: S,
    pub z: S,
}

impl<S: Real> Vec3<S> {
    pub fn new(x: S, y: S, z: S) -> Self {
        Vec3 { x, y, z }
    }

    pub fn add(self, o: Self) -> Self {
        Vec3::new(self.x + o.x, self.y + o.y, self.z + o.z)
    }

    pub fn sub(self, o: Self) -> Self {
        Vec3::new(self.x - o.x, self.y - o.y, self.z - o.z)
    }

    pub fn scale(self, s: S) -> Self {
        Vec3::new(self.x * s, self.y * s, self.z * s)
    }

    pub fn scale_f64(self, c: f64) -> Self {
        Vec3::new(self.x * c, self.y * c, self.z * c)
    }

    pub fn dot(self, o: Self) -> S {
        self.x * o.x + self.y * o.y + self.z * o.z
    }

    pub fn norm_squared(self) -> S {
        self.dot(self)
    }

    pub fn norm(self) -> S {
        self.norm_squared().sqrt()
    }

    pub fn values(self) -> [f64; 3] {
        [self.x.val(), self.y.val(), self.z.val()]
    }
}

impl Vec3<f64> {
    pub fn from_array(a: [f64; 3]) -> Self {
        Vec3::new(a[0], a[1], a[2])
    }
}

/// Row-major 3x3 matrix.
#[derive(Clone, Copy, Debug)]
pub struct Mat3<S> {
    pub m: [[S; 3]; 3],
}

impl<S: Real> Mat3<S> {
    pub fn mul(self, o: Self) -> Self {
        let mut out = self;
        for i in 0..3 {
            for j in 0..3 {
                out.m[i][j] = self.m[i][0] * o.m[0][j]
                    + self.m[i][1] * o.m[1][j]
                    + self.m[i][2] * o.m[2][j];
            }
        }
        out
    }

    pub fn mul_vec(self, v: Vec3<S>) -> Vec3<S> {
        Vec3::new(
            self.m[0][0] * v.x + self.m[0][1] * v.y + self.m[0][2] * v.z,
            self.m[1][0] * v.x + self.m[1][1] * v.y + self.m[1][2] * v.z,
            self.m[2][0] * v.x + self.m[2][1] * v.y + self.m[2][2] * v.z,
        )
    }

    /// Rotation by angle `theta` about a fixed unit axis (Rodrigues form).
    /// The axis is a compile-time constant of the model, so only `theta`
    /// carries derivatives.
    pub fn rotation(axis: [f64; 3], theta: S) -> Self {
        let (ux, uy, uz) = (axis[0], axis[1], axis[2]);
        let c = theta.cos();
        let s = theta.sin();
        let omc = c.rsub(1.0); // 1 - cos
        let m = [
            [
                c + omc * (ux * ux),
                omc * (ux * uy) - s * uz,
                omc * (ux * uz) + s * uy,
            ],
            [
                omc * (uy * ux) + s * uz,
                c + omc * (uy * uy),
                omc * (uy * uz) - s * ux,
            ],
            [
                omc * (uz * ux) - s * uy,
                omc * (uz * uy) + s * ux,
                c + omc * (uz * uz),
            ],
        ];
        Mat3 { m }
    }
}

/// Apply a constant (non-differentiated) row-major matrix to a generic vector.
pub fn mat3_f64_mul_vec<S: Real>(m: &[[f64; 3]; 3], v: Vec3<S>) -> Vec3<S> {
    Vec3::new(
        v.x * m[0][0] + v.y * m[0][1] + v.z * m[0][2],
        v.x * m[1][0] + v.y * m[1][1] + v.z * m[1][2],
        v.x * m[2][0] + v.y * m[2][1] + v.z * m[2][2],
    )
}

/// Linear-interpolation quantile (the `(n-1)p` rule): `{1,2,3,4}` has
/// q25 = 1.75, median = 2.5, q75 = 3.25.
pub fn quantile(sorted: &[f64], p: f64) -> f64 {
    assert!(!sorted.is_empty(), "quantile of empty slice");
    if sorted.len() == 1 {
        return sorted[0];
    }
    let h = (sorted.len() - 1) as f64 * p;
    let lo = h.floor() as usize;
    let hi = h.ceil() as usize;
    let frac = h - lo as f64;
    sorted[lo] + (sorted[hi] - sorted[lo]) * frac
}

/// Median via [`quantile`] at p = 0.5 on a copy of the data.
pub fn median(values: &[f64]) -> f64 {
    let mut v = values.to_vec();
    v.sort_by(|a, b| a.partial_cmp(b).unwrap());
    quantile(&v, 0.5)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn rotation_matches_nalgebra() {
        let axis = [0.0, 1.0, 0.0];
        let theta = 0.7;
        let r = Mat3::<f64>::rotation(axis, theta);
        let na = nalgebra::Rotation3::from_axis_angle(
            &nalgebra::Unit::new_normalize(nalgebra::Vector3::new(axis[0], axis[1], axis[2])),
            theta,
        );
        for i in 0..3 {
            for j in 0..3 {
                assert_relative_eq!(r.m[i][j], na[(i, j)], max_relative = 1e-14, epsilon = 1e-14);
            }
        }
    }

    #[test]
    fn quantile_definition() {
        let v = [1.0, 2.0, 3.0, 4.0];
        assert_relative_eq!(quantile(&v, 0.25), 1.75);
        assert_relative_eq!(quantile(&v, 0.5), 2.5);
        assert_relative_eq!(quantile(&v, 0.75), 3.25);
    }
}
