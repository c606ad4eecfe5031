//! Procedural CAD models and multi-object scenes.

use std::collections::BTreeMap;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::render::{render_view, screen_bounds, shade, Raster};
use super::views::select_canonical_views;
use crate::error::{Error, Result};
use crate::geometry::{primitives, BBox, Pose, Quaternion, TriMesh, Vec3};
use crate::image::{BitMask, GrayImage};
use crate::pose::{lift_center, CameraIntrinsics};

/// Parametric families, one per class.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Family {
    Cuboid,
    Cylinder,
    Bracket,
    Frustum,
    Wedge,
}

impl Family {
    pub const ALL: [Family; 5] = [
        Family::Cuboid,
        Family::Cylinder,
        Family::Bracket,
        Family::Frustum,
        Family::Wedge,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Family::Cuboid => "cuboid",
            Family::Cylinder => "cylinder",
            Family::Bracket => "bracket",
            Family::Frustum => "frustum",
            Family::Wedge => "wedge",
        }
    }

    /// A random member with distinct proportions, scaled to unit radius.
    pub fn sample(self, rng: &mut impl Rng) -> TriMesh {
        let mut u = |lo: f64, hi: f64| rng.random_range(lo..hi);
        let mesh = match self {
            Family::Cuboid => cuboid_dims(&mut u),
            Family::Cylinder => primitives::cylinder(u(0.15, 0.75), u(1.2, 2.4), 16),
            Family::Bracket => primitives::bracket(u(0.8, 1.6), u(0.8, 1.6), u(0.15, 0.4), u(0.5, 1.3)),
            Family::Frustum => {
                let (bx, bz) = (u(0.45, 0.9), u(0.25, 0.6));
                let shrink = u(0.25, 0.8);
                primitives::frustum([bx, bz], [bx * shrink, bz * shrink], u(0.7, 1.6))
            }
            Family::Wedge => primitives::wedge(u(0.8, 1.8), u(0.5, 1.5), u(0.5, 1.3)),
        };
        let r = mesh.radius();
        mesh.scaled(1.0 / r)
    }
}

fn cuboid_dims(u: &mut impl FnMut(f64, f64) -> f64) -> TriMesh {
    // Reject near-square footprints, whose quarter-turn symmetry would make
    // yaw ambiguous.
    loop {
        let s = [u(0.5, 1.6), u(0.5, 1.6), u(0.5, 1.6)];
        let ratio = s[0].max(s[2]) / s[0].min(s[2]);
        if ratio >= 1.3 {
            return primitives::cuboid(s);
        }
    }
}

/// Range of rotations used for object poses: `R_x(elevation) * R_y(yaw)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PosePrior {
    pub elevation_deg: [f64; 2],
    pub yaw_deg: [f64; 2],
}

impl Default for PosePrior {
    fn default() -> Self {
        Self {
            elevation_deg: [15.0, 35.0],
            yaw_deg: [-80.0, 80.0],
        }
    }
}

impl PosePrior {
    pub fn sample(&self, rng: &mut impl Rng) -> Quaternion {
        let e = uniform(rng, self.elevation_deg).to_radians();
        let y = uniform(rng, self.yaw_deg).to_radians();
        let rx = Quaternion::new((e / 2.0).cos(), (e / 2.0).sin(), 0.0, 0.0);
        let ry = Quaternion::new((y / 2.0).cos(), 0.0, (y / 2.0).sin(), 0.0);
        rx.mul(ry)
    }
}

fn uniform(rng: &mut impl Rng, [lo, hi]: [f64; 2]) -> f64 {
    if hi > lo {
        rng.random_range(lo..hi)
    } else {
        lo
    }
}

/// Upper bound on objects per image, so `image_id * MAX_OBJECTS + region`
/// identifies a region.
pub const MAX_OBJECTS: usize = 16;

/// Size and sampling parameters of a generated dataset.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetSpec {
    pub classes: usize,
    pub objects_per_class: usize,
    /// Objects per class withheld from training images.
    pub heldout_per_class: usize,
    pub train_images: usize,
    pub val_images: usize,
    /// Images showing only held-out objects.
    pub unseen_images: usize,
    pub image_size: usize,
    pub focal: f64,
    pub depth_range: [f64; 2],
    pub scale_range: [f64; 2],
    pub max_objects: usize,
    pub pose_prior: PosePrior,
    pub view_resolution: usize,
    pub canonical_views: usize,
    pub seed: u64,
}

impl Default for DatasetSpec {
    fn default() -> Self {
        Self {
            classes: 5,
            objects_per_class: 8,
            heldout_per_class: 2,
            train_images: 400,
            val_images: 60,
            unseen_images: 40,
            image_size: 128,
            focal: 160.0,
            depth_range: [7.0, 10.0],
            scale_range: [0.9, 1.1],
            max_objects: 4,
            pose_prior: PosePrior::default(),
            view_resolution: 40,
            canonical_views: 16,
            seed: 0,
        }
    }
}

impl DatasetSpec {
    pub fn validate(&self) -> Result<()> {
        if self.classes < 2 || self.classes > Family::ALL.len() {
            return Err(Error::domain(format!(
                "need between 2 and {} classes, got {}",
                Family::ALL.len(),
                self.classes
            )));
        }
        if self.objects_per_class < 4 {
            return Err(Error::domain("need at least 4 objects per class"));
        }
        if self.heldout_per_class >= self.objects_per_class {
            return Err(Error::domain("held-out objects must leave some for training"));
        }
        if self.max_objects == 0 || self.max_objects > MAX_OBJECTS || self.image_size < 16 || !(self.focal > 0.0) {
            return Err(Error::domain("invalid scene parameters"));
        }
        if !(self.depth_range[0] > 0.0) || self.depth_range[1] < self.depth_range[0] {
            return Err(Error::domain("depth range must be positive and ordered"));
        }
        if !(self.scale_range[0] > 0.0) || self.scale_range[1] < self.scale_range[0] {
            return Err(Error::domain("scale range must be positive and ordered"));
        }
        if self.canonical_views == 0 || self.view_resolution == 0 {
            return Err(Error::domain("invalid view parameters"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Split {
    Train,
    Val,
    Unseen,
}

impl std::str::FromStr for Split {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "train" => Ok(Split::Train),
            "val" => Ok(Split::Val),
            "unseen" => Ok(Split::Unseen),
            other => Err(Error::Config(format!("unknown split `{other}` (train, val or unseen)"))),
        }
    }
}

impl Split {
    pub fn name(self) -> &'static str {
        match self {
            Split::Train => "train",
            Split::Val => "val",
            Split::Unseen => "unseen",
        }
    }

    fn stream(self) -> u64 {
        match self {
            Split::Train => 1,
            Split::Val => 2,
            Split::Unseen => 3,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct CanonicalView {
    pub view_id: u32,
    pub rotation: Quaternion,
    pub image: GrayImage,
}

#[derive(Debug, Clone, PartialEq)]
pub struct CadEntry {
    pub object_id: u32,
    pub class_id: u32,
    pub family: Family,
    pub mesh: TriMesh,
    pub heldout: bool,
    pub views: Vec<CanonicalView>,
}

/// Ground truth of one object instance in an image.
#[derive(Debug, Clone, PartialEq)]
pub struct RegionGt {
    pub class_id: u32,
    pub object_id: u32,
    /// Amodal box of the projected model.
    pub bbox: BBox,
    /// Full-image silhouette.
    pub mask: BitMask,
    pub pose: Pose,
    /// Projection of the model origin.
    pub center_px: [f64; 2],
}

#[derive(Debug, Clone, PartialEq)]
pub struct Sample {
    pub image_id: u32,
    pub split: Split,
    pub image: GrayImage,
    pub intrinsics: CameraIntrinsics,
    pub regions: Vec<RegionGt>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub spec: DatasetSpec,
    pub classes: Vec<String>,
    pub intrinsics: CameraIntrinsics,
    pub cads: Vec<CadEntry>,
    pub samples: Vec<Sample>,
}

impl Dataset {
    pub fn cad(&self, object_id: u32) -> Result<&CadEntry> {
        self.cads
            .get(object_id as usize)
            .filter(|c| c.object_id == object_id)
            .ok_or_else(|| Error::lookup(format!("unknown object {object_id}")))
    }

    pub fn split(&self, split: Split) -> impl Iterator<Item = &Sample> {
        self.samples.iter().filter(move |s| s.split == split)
    }

    /// Canonical view rotations per class (shared by all its objects).
    pub fn canonical_rotations(&self) -> BTreeMap<u32, Vec<Quaternion>> {
        let mut out = BTreeMap::new();
        for c in &self.cads {
            out.entry(c.class_id)
                .or_insert_with(|| c.views.iter().map(|v| v.rotation).collect());
        }
        out
    }

    /// Ground-truth rotations of training regions per class.
    pub fn train_rotations(&self) -> BTreeMap<u32, Vec<Quaternion>> {
        let mut out: BTreeMap<u32, Vec<Quaternion>> = BTreeMap::new();
        for s in self.split(Split::Train) {
            for r in &s.regions {
                out.entry(r.class_id).or_default().push(r.pose.rotation);
            }
        }
        out
    }
}

/// SplitMix64 mixing of a base seed with a stream and index.
pub fn derive_seed(seed: u64, stream: u64, index: u64) -> u64 {
    let mut z = seed
        ^ stream.wrapping_mul(0x9E37_79B9_7F4A_7C15)
        ^ index.wrapping_mul(0xD1B5_4A32_D192_ED03);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Model and pose of an object to be placed in a scene.
#[derive(Debug, Clone)]
pub struct Placement<'a> {
    pub id: u32,
    pub mesh: &'a TriMesh,
    pub pose: Pose,
}

/// Weak-perspective projection of `pose`d vertices: orthographic about the
/// object centre with magnification `f / t_z`. Returns `(u, v, depth)`.
pub fn project_object(mesh: &TriMesh, pose: &Pose, intr: &CameraIntrinsics) -> Vec<Vec3> {
    let tz = pose.translation[2];
    mesh.vertices()
        .iter()
        .map(|&v| {
            let p = pose.transform_point(v);
            [intr.cx + intr.fx * p[0] / tz, intr.cy + intr.fy * p[1] / tz, p[2]]
        })
        .collect()
}

/// Renders placed objects; returns the image and one mask per placement.
pub fn render_scene(
    placements: &[Placement<'_>],
    intr: &CameraIntrinsics,
    width: usize,
    height: usize,
) -> (GrayImage, Vec<BitMask>) {
    let mut raster = Raster::new(width, height);
    for (k, pl) in placements.iter().enumerate() {
        let screen = project_object(pl.mesh, &pl.pose, intr);
        let tz = pl.pose.translation[2];
        let radius = pl.mesh.radius() * pl.pose.scale.iter().copied().fold(0.0, f64::max);
        let shader = |z: f64| shade((z - tz) / radius);
        for f in pl.mesh.faces() {
            raster.triangle([screen[f[0]], screen[f[1]], screen[f[2]]], k as u32, &shader);
        }
    }
    let masks = (0..placements.len()).map(|k| raster.mask_of(k as u32)).collect();
    (raster.image(), masks)
}

fn overlaps(a: &BBox, b: &BBox, gap: f64) -> bool {
    a.xmin < b.xmax + gap && b.xmin < a.xmax + gap && a.ymin < b.ymax + gap && b.ymin < a.ymax + gap
}

fn generate_sample(
    spec: &DatasetSpec,
    intr: &CameraIntrinsics,
    cads: &[(u32, u32, TriMesh)],
    pool: &[u32],
    split: Split,
    index: usize,
    image_id: u32,
) -> Result<Sample> {
    let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(spec.seed, split.stream(), index as u64));
    let n = rng.random_range(1..=spec.max_objects);
    let size = spec.image_size as f64;
    let mut placed: Vec<(u32, Pose, BBox)> = Vec::new();
    for _ in 0..n {
        for _attempt in 0..40 {
            let object_id = pool[rng.random_range(0..pool.len())];
            let mesh = &cads[object_id as usize].2;
            let rotation = spec.pose_prior.sample(&mut rng);
            let s = uniform(&mut rng, spec.scale_range);
            let z = uniform(&mut rng, spec.depth_range);
            let center = [rng.random_range(0.0..size), rng.random_range(0.0..size)];
            let pose = Pose::new(rotation, lift_center(center, z, intr)?, [s; 3])?;
            let bbox = screen_bounds(&project_object(mesh, &pose, intr))?;
            let inside = bbox.xmin >= 1.0 && bbox.ymin >= 1.0 && bbox.xmax <= size - 1.0 && bbox.ymax <= size - 1.0;
            if inside && placed.iter().all(|(_, _, b)| !overlaps(b, &bbox, 2.0)) {
                placed.push((object_id, pose, bbox));
                break;
            }
        }
    }
    let placements: Vec<Placement<'_>> = placed
        .iter()
        .map(|(id, pose, _)| Placement {
            id: *id,
            mesh: &cads[*id as usize].2,
            pose: *pose,
        })
        .collect();
    let (image, masks) = render_scene(&placements, intr, spec.image_size, spec.image_size);
    let regions = placed
        .iter()
        .zip(masks)
        .map(|((object_id, pose, bbox), mask)| {
            Ok(RegionGt {
                class_id: cads[*object_id as usize].1,
                object_id: *object_id,
                bbox: *bbox,
                mask,
                pose: *pose,
                center_px: intr.project(pose.translation)?,
            })
        })
        .collect::<Result<_>>()?;
    Ok(Sample {
        image_id,
        split,
        image,
        intrinsics: *intr,
        regions,
    })
}

const SHAPE_CANDIDATES: usize = 24;

fn extents(m: &TriMesh) -> Vec3 {
    let (lo, hi) = m.bounds().expect("non-empty family mesh");
    [hi[0] - lo[0], hi[1] - lo[1], hi[2] - lo[2]]
}

/// Smallest L-infinity distance from `e` to any chosen extent vector.
fn spread(chosen: &[Vec3], e: Vec3) -> f64 {
    chosen
        .iter()
        .map(|c| (0..3).map(|i| (c[i] - e[i]).abs()).fold(0.0, f64::max))
        .fold(f64::INFINITY, f64::min)
}

/// Builds the CAD set, scenes for every split and canonical views.
pub fn generate_dataset(spec: &DatasetSpec) -> Result<Dataset> {
    spec.validate()?;
    let intr = CameraIntrinsics::centered(spec.focal, spec.image_size, spec.image_size)?;
    let mut cads = Vec::new();
    for class in 0..spec.classes {
        let family = Family::ALL[class];
        let mut chosen: Vec<Vec3> = Vec::new();
        for k in 0..spec.objects_per_class {
            let id = (class * spec.objects_per_class + k) as u32;
            let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(spec.seed, 0, u64::from(id)));
            // Farthest-point choice among candidates keeps same-class objects
            // visibly distinct.
            let (mesh, ext) = (0..SHAPE_CANDIDATES)
                .map(|_| {
                    let m = family.sample(&mut rng);
                    let e = extents(&m);
                    (m, e)
                })
                .max_by(|a, b| spread(&chosen, a.1).total_cmp(&spread(&chosen, b.1)))
                .expect("at least one candidate");
            chosen.push(ext);
            cads.push((id, class as u32, mesh));
        }
    }
    let is_heldout = |id: u32| (id as usize % spec.objects_per_class) >= spec.objects_per_class - spec.heldout_per_class;
    let seen: Vec<u32> = cads.iter().map(|c| c.0).filter(|&i| !is_heldout(i)).collect();
    let unseen: Vec<u32> = cads.iter().map(|c| c.0).filter(|&i| is_heldout(i)).collect();

    let mut samples = Vec::new();
    let mut next_id = 0u32;
    for (split, count, pool) in [
        (Split::Train, spec.train_images, &seen),
        (Split::Val, spec.val_images, &seen),
        (Split::Unseen, spec.unseen_images, &unseen),
    ] {
        if count > 0 && pool.is_empty() {
            return Err(Error::domain(format!("no objects available for split {split:?}")));
        }
        for i in 0..count {
            samples.push(generate_sample(spec, &intr, &cads, pool, split, i, next_id)?);
            next_id += 1;
        }
    }

    let mut train_rots: BTreeMap<u32, Vec<Quaternion>> = BTreeMap::new();
    for s in samples.iter().filter(|s| s.split == Split::Train) {
        for r in &s.regions {
            train_rots.entry(r.class_id).or_default().push(r.pose.rotation);
        }
    }
    for class in 0..spec.classes as u32 {
        if !train_rots.contains_key(&class) {
            return Err(Error::domain(format!("class {class} has no training regions")));
        }
    }
    let canonical = select_canonical_views(&train_rots, spec.canonical_views, derive_seed(spec.seed, 4, 0))?;

    let cads = cads
        .into_iter()
        .map(|(object_id, class_id, mesh)| {
            let views = canonical[&class_id]
                .iter()
                .enumerate()
                .map(|(v, &rotation)| {
                    Ok(CanonicalView {
                        view_id: v as u32,
                        rotation,
                        image: render_view(&mesh, rotation, spec.view_resolution)?,
                    })
                })
                .collect::<Result<_>>()?;
            Ok(CadEntry {
                object_id,
                class_id,
                family: Family::ALL[class_id as usize],
                mesh,
                heldout: is_heldout(object_id),
                views,
            })
        })
        .collect::<Result<_>>()?;

    Ok(Dataset {
        spec: spec.clone(),
        classes: (0..spec.classes).map(|c| Family::ALL[c].name().to_string()).collect(),
        intrinsics: intr,
        cads,
        samples,
    })
}
