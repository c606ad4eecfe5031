//! Pinhole camera (x right, y down, z forward) and horizontal flips.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::quat::Quaternion;
use crate::geometry::{Pose, Vec3};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CameraIntrinsics {
    pub fx: f64,
    pub fy: f64,
    pub cx: f64,
    pub cy: f64,
}

impl CameraIntrinsics {
    pub fn new(fx: f64, fy: f64, cx: f64, cy: f64) -> Result<Self> {
        if !(fx > 0.0) || !(fy > 0.0) {
            return Err(Error::domain("focal lengths must be positive"));
        }
        if !cx.is_finite() || !cy.is_finite() {
            return Err(Error::domain("principal point must be finite"));
        }
        Ok(Self { fx, fy, cx, cy })
    }

    /// Principal point at the image centre, so that flipping `u -> W - u`
    /// is the same as negating camera-space `x`.
    pub fn centered(focal: f64, width: usize, height: usize) -> Result<Self> {
        Self::new(focal, focal, width as f64 / 2.0, height as f64 / 2.0)
    }

    pub fn project(&self, p: Vec3) -> Result<[f64; 2]> {
        if !(p[2] > 0.0) {
            return Err(Error::domain(format!("point behind camera (z = {})", p[2])));
        }
        Ok([self.cx + self.fx * p[0] / p[2], self.cy + self.fy * p[1] / p[2]])
    }
}

/// Intersects the ray through `center_px` with the plane at depth `z`.
pub fn lift_center(center_px: [f64; 2], z: f64, intr: &CameraIntrinsics) -> Result<Vec3> {
    if !(z > 0.0) {
        return Err(Error::domain(format!("lift depth must be positive, got {z}")));
    }
    Ok([
        (center_px[0] - intr.cx) * z / intr.fx,
        (center_px[1] - intr.cy) * z / intr.fy,
        z,
    ])
}

/// Conjugation by `diag(-1, 1, 1)`.
pub fn flip_rotation(q: Quaternion) -> Quaternion {
    Quaternion::new(q.w, q.x, -q.y, -q.z)
}

/// Pose and centre deltas after a horizontal image flip.
pub fn flip_pose(pose: &Pose, deltas: [f64; 2]) -> (Pose, [f64; 2]) {
    let t = pose.translation;
    (
        Pose {
            rotation: flip_rotation(pose.rotation),
            translation: [-t[0], t[1], t[2]],
            scale: pose.scale,
        },
        [-deltas[0], deltas[1]],
    )
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::quat::geodesic_unchecked;
    use proptest::prelude::*;

    #[test]
    fn lift_cases() {
        let k = CameraIntrinsics::new(100.0, 120.0, 64.0, 60.0).unwrap();
        assert_eq!(lift_center([64.0, 60.0], 3.0, &k).unwrap(), [0.0, 0.0, 3.0]);
        assert!((lift_center([164.0, 60.0], 1.0, &k).unwrap()[0] - 1.0).abs() < 1e-15);
        let a = lift_center([80.0, 10.0], 2.0, &k).unwrap();
        let b = lift_center([80.0, 10.0], 4.0, &k).unwrap();
        assert!((b[0] - 2.0 * a[0]).abs() < 1e-12 && (b[1] - 2.0 * a[1]).abs() < 1e-12);
        assert!(lift_center([0.0, 0.0], 0.0, &k).is_err());
        assert!(CameraIntrinsics::new(0.0, 1.0, 0.0, 0.0).is_err());
    }

    #[test]
    fn flip_cases() {
        let id = Pose::default();
        assert_eq!(flip_pose(&id, [0.0, 0.0]).0.rotation, Quaternion::IDENTITY);
        let rx = Quaternion::from_axis_angle([1.0, 0.0, 0.0], 0.7).unwrap();
        assert_eq!(flip_rotation(rx), rx);
    }

    proptest! {
        #[test]
        fn flip_is_involution(w in -1.0f64..1.0, x in -1.0f64..1.0, y in -1.0f64..1.0, z in -1.0f64..1.0,
                              tx in -5.0f64..5.0, dx in -1.0f64..1.0) {
            prop_assume!(w * w + x * x + y * y + z * z > 1e-3);
            let q = Quaternion::new(w, x, y, z).normalize().unwrap();
            let p = Pose { rotation: q, translation: [tx, 1.0, 4.0], scale: [1.0; 3] };
            let (f, d) = flip_pose(&p, [dx, 0.3]);
            let (g, e) = flip_pose(&f, d);
            prop_assert_eq!(g, p);
            prop_assert_eq!(e, [dx, 0.3]);
        }

        #[test]
        fn flip_matches_mirrored_geometry(w in -1.0f64..1.0, x in -1.0f64..1.0, y in -1.0f64..1.0, z in -1.0f64..1.0,
                                          px in -1.0f64..1.0, py in -1.0f64..1.0, pz in -1.0f64..1.0) {
            prop_assume!(w * w + x * x + y * y + z * z > 1e-3);
            let q = Quaternion::new(w, x, y, z).normalize().unwrap();
            // Mirroring the rotated mirrored point equals rotating by the flipped quaternion.
            let m = |v: Vec3| [-v[0], v[1], v[2]];
            let lhs = m(q.rotate(m([px, py, pz])));
            let rhs = flip_rotation(q).rotate([px, py, pz]);
            for i in 0..3 {
                prop_assert!((lhs[i] - rhs[i]).abs() < 1e-12);
            }
            prop_assert!(geodesic_unchecked(flip_rotation(flip_rotation(q)), q) < 1e-12);
        }
    }
}
