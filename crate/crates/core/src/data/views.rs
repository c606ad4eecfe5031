//! Canonical view selection and jittered ground-truth views.

use std::collections::BTreeMap;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::render::{render_view_full, ViewRender};
use super::roi::{crop_region, RoiConfig};
use crate::learner::DetectionRegion;
use crate::error::{Error, Result};
use crate::geometry::quat::geodesic_unchecked;
use crate::geometry::{kmedoid, Quaternion, TriMesh};

/// Default jitter magnitude for ground-truth views: 5 degrees.
pub const DEFAULT_VIEW_JITTER: f64 = 5.0 * std::f64::consts::PI / 180.0;

/// `k` geodesic medoids of each class's training view rotations, in
/// ascending order of their position in the input list.
pub fn select_canonical_views(
    train_view_rotations: &BTreeMap<u32, Vec<Quaternion>>,
    k: usize,
    seed: u64,
) -> Result<BTreeMap<u32, Vec<Quaternion>>> {
    let mut out = BTreeMap::new();
    for (&class, rots) in train_view_rotations {
        if rots.len() < k {
            return Err(Error::domain(format!(
                "class {class} has {} training views, fewer than k = {k}",
                rots.len()
            )));
        }
        let m = kmedoid(rots, k, |a, b| geodesic_unchecked(*a, *b), seed.wrapping_add(u64::from(class)))?;
        out.insert(class, m.medoids.iter().map(|&i| rots[i].canonical()).collect());
    }
    Ok(out)
}

/// Uniformly random unit axis.
pub fn random_axis(rng: &mut impl Rng) -> [f64; 3] {
    loop {
        let v = [
            rng.random_range(-1.0..1.0),
            rng.random_range(-1.0..1.0),
            rng.random_range(-1.0f64..1.0),
        ];
        let n2 = v[0] * v[0] + v[1] * v[1] + v[2] * v[2];
        if n2 > 1e-6 && n2 <= 1.0 {
            let n = n2.sqrt();
            return [v[0] / n, v[1] / n, v[2] / n];
        }
    }
}

/// `gt` perturbed by a random axis-angle rotation of angle at most `magnitude`.
pub fn jitter_rotation(gt: Quaternion, magnitude: f64, rng: &mut impl Rng) -> Result<Quaternion> {
    if !(magnitude > 0.0) {
        return Err(Error::domain("jitter magnitude must be positive"));
    }
    let angle = rng.random_range(0.0..magnitude);
    let j = Quaternion::from_axis_angle(random_axis(rng), angle)?;
    j.mul(gt).normalize()
}

/// Render of `mesh` at a slightly jittered ground-truth rotation.
pub fn jittered_gt_view(
    mesh: &TriMesh,
    gt_rotation: Quaternion,
    magnitude: f64,
    resolution: usize,
    seed: u64,
) -> Result<(ViewRender, Quaternion)> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let q = jitter_rotation(gt_rotation, magnitude, &mut rng)?;
    Ok((render_view_full(mesh, q, resolution)?, q))
}

/// Renders `mesh` at `rotation` and crops it through the region path, with
/// the projected model box as the detection box.
pub fn view_region(
    mesh: &TriMesh,
    rotation: Quaternion,
    resolution: usize,
    class_id: u32,
    roi: &RoiConfig,
) -> Result<DetectionRegion> {
    region_from_render(&render_view_full(mesh, rotation, resolution)?, class_id, roi)
}

pub fn region_from_render(v: &ViewRender, class_id: u32, roi: &RoiConfig) -> Result<DetectionRegion> {
    crop_region(&v.image, &v.mask, v.bbox, class_id, roi)
}
