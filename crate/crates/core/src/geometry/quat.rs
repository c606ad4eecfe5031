//! Hamilton quaternions in `(w, x, y, z)` order.
//!
//! Camera frame: x right, y down, z forward (the pinhole lifting in
//! [`crate::pose::lift_center`] uses positive depth along +z).

use serde::{Deserialize, Serialize};

use super::vec3::{self, Vec3};
use crate::error::{Error, Result};

/// Tolerance on `|q| - 1` accepted by operations that require unit input.
pub const UNIT_TOLERANCE: f64 = 1e-6;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(from = "[f64; 4]", into = "[f64; 4]")]
pub struct Quaternion {
    pub w: f64,
    pub x: f64,
    pub y: f64,
    pub z: f64,
}

impl From<[f64; 4]> for Quaternion {
    fn from(v: [f64; 4]) -> Self {
        Self::new(v[0], v[1], v[2], v[3])
    }
}

impl From<Quaternion> for [f64; 4] {
    fn from(q: Quaternion) -> Self {
        q.to_array()
    }
}

impl Default for Quaternion {
    fn default() -> Self {
        Self::IDENTITY
    }
}

impl Quaternion {
    pub const IDENTITY: Quaternion = Quaternion {
        w: 1.0,
        x: 0.0,
        y: 0.0,
        z: 0.0,
    };

    pub const fn new(w: f64, x: f64, y: f64, z: f64) -> Self {
        Self { w, x, y, z }
    }

    pub fn to_array(self) -> [f64; 4] {
        [self.w, self.x, self.y, self.z]
    }

    /// Rotation of `angle` radians about `axis` (need not be unit length).
    pub fn from_axis_angle(axis: Vec3, angle: f64) -> Result<Self> {
        let n = vec3::norm(axis);
        if n == 0.0 || !n.is_finite() {
            return Err(Error::domain("rotation axis must be non-zero and finite"));
        }
        let (s, c) = (angle * 0.5).sin_cos();
        let k = s / n;
        Ok(Self::new(c, axis[0] * k, axis[1] * k, axis[2] * k))
    }

    pub fn norm(self) -> f64 {
        self.dot(self).sqrt()
    }

    pub fn dot(self, o: Self) -> f64 {
        self.w * o.w + self.x * o.x + self.y * o.y + self.z * o.z
    }

    pub fn neg(self) -> Self {
        Self::new(-self.w, -self.x, -self.y, -self.z)
    }

    pub fn conj(self) -> Self {
        Self::new(self.w, -self.x, -self.y, -self.z)
    }

    pub fn is_finite(self) -> bool {
        self.w.is_finite() && self.x.is_finite() && self.y.is_finite() && self.z.is_finite()
    }

    pub fn is_unit(self) -> bool {
        (self.norm() - 1.0).abs() <= UNIT_TOLERANCE
    }

    /// Scales to unit norm. Fails on zero or non-finite input.
    pub fn normalize(self) -> Result<Self> {
        let n = self.norm();
        if n == 0.0 || !n.is_finite() {
            return Err(Error::domain(format!(
                "cannot normalize quaternion with norm {n}"
            )));
        }
        Ok(Self::new(self.w / n, self.x / n, self.y / n, self.z / n))
    }

    /// Representative of `±q` with `w >= 0`.
    pub fn canonical(self) -> Self {
        if self.w < 0.0 {
            self.neg()
        } else {
            self
        }
    }

    /// Hamilton product `self * o`.
    pub fn mul(self, o: Self) -> Self {
        Self::new(
            self.w * o.w - self.x * o.x - self.y * o.y - self.z * o.z,
            self.w * o.x + self.x * o.w + self.y * o.z - self.z * o.y,
            self.w * o.y - self.x * o.z + self.y * o.w + self.z * o.x,
            self.w * o.z + self.x * o.y - self.y * o.x + self.z * o.w,
        )
    }

    /// Rotates `p` by this (unit) quaternion.
    pub fn rotate(self, p: Vec3) -> Vec3 {
        // p' = p + 2w (v x p) + 2 v x (v x p)
        let v = [self.x, self.y, self.z];
        let t = vec3::scale(vec3::cross(v, p), 2.0);
        vec3::add(vec3::add(p, vec3::scale(t, self.w)), vec3::cross(v, t))
    }

    /// Row-major rotation matrix.
    pub fn to_matrix(self) -> [[f64; 3]; 3] {
        let Self { w, x, y, z } = self;
        [
            [
                1.0 - 2.0 * (y * y + z * z),
                2.0 * (x * y - w * z),
                2.0 * (x * z + w * y),
            ],
            [
                2.0 * (x * y + w * z),
                1.0 - 2.0 * (x * x + z * z),
                2.0 * (y * z - w * x),
            ],
            [
                2.0 * (x * z - w * y),
                2.0 * (y * z + w * x),
                1.0 - 2.0 * (x * x + y * y),
            ],
        ]
    }

    /// Rotation angle of `self` in `[0, pi]`, treating `q` and `-q` alike.
    pub fn angle(self) -> f64 {
        let v = (self.x * self.x + self.y * self.y + self.z * self.z).sqrt();
        2.0 * v.atan2(self.w.abs())
    }
}

/// Geodesic angle between two rotations, in radians within `[0, pi]`.
///
/// Equal to `2 acos |<q1, q2>|`, evaluated as `4 atan2(|q1 - q2|, |q1 + q2|)`
/// (after aligning signs) so that nearly identical inputs keep full precision.
pub fn quat_geodesic(q1: Quaternion, q2: Quaternion) -> Result<f64> {
    if !q1.is_unit() || !q2.is_unit() {
        return Err(Error::domain(format!(
            "geodesic distance requires unit quaternions (norms {}, {})",
            q1.norm(),
            q2.norm()
        )));
    }
    Ok(geodesic_unchecked(q1, q2))
}

pub(crate) fn geodesic_unchecked(q1: Quaternion, q2: Quaternion) -> f64 {
    let q2 = if q1.dot(q2) < 0.0 { q2.neg() } else { q2 };
    let a = [q1.w, q1.x, q1.y, q1.z];
    let b = [q2.w, q2.x, q2.y, q2.z];
    let (mut diff, mut sum) = (0.0, 0.0);
    for i in 0..4 {
        diff += (a[i] - b[i]) * (a[i] - b[i]);
        sum += (a[i] + b[i]) * (a[i] + b[i]);
    }
    4.0 * diff.sqrt().atan2(sum.sqrt())
}

pub fn quat_normalize(q: Quaternion) -> Result<Quaternion> {
    q.normalize()
}

pub fn quat_multiply(q1: Quaternion, q2: Quaternion) -> Quaternion {
    q1.mul(q2)
}

pub fn quat_apply(q: Quaternion, p: Vec3) -> Vec3 {
    q.rotate(p)
}
