//! Point-cloud shape metrics on scale-normalised meshes.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{sample_surface, vec3, KdTree, PointCloud, TriMesh};

/// Length of the longest ground-truth bounding-box edge after normalisation.
pub const NORMALIZED_EXTENT: f64 = 10.0;
/// F1 distance thresholds reported per shape.
pub const F1_THRESHOLDS: [f64; 3] = [0.1, 0.3, 0.5];
/// Points sampled per mesh for every metric.
pub const METRIC_SAMPLES: usize = 10_000;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct F1At {
    pub threshold: f64,
    pub value: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ShapeScore {
    pub chamfer: f64,
    pub normal_consistency: f64,
    pub f1: Vec<F1At>,
}

impl ShapeScore {
    pub fn f1_at(&self, threshold: f64) -> Option<f64> {
        self.f1
            .iter()
            .find(|f| (f.threshold - threshold).abs() < 1e-12)
            .map(|f| f.value)
    }
}

/// Factor `10 / longest bbox edge of gt`.
pub fn scale_factor(gt: &TriMesh) -> Result<f64> {
    let (lo, hi) = gt
        .bounds()
        .ok_or_else(|| Error::domain("cannot normalise against an empty mesh"))?;
    let longest = (0..3).map(|i| hi[i] - lo[i]).fold(0.0, f64::max);
    if !(longest > 0.0) {
        return Err(Error::domain("ground-truth mesh has zero extent"));
    }
    Ok(NORMALIZED_EXTENT / longest)
}

/// Scales both meshes so the ground truth's longest bbox edge has length 10.
pub fn normalize_scale(gt: &TriMesh, pred: &TriMesh) -> Result<(TriMesh, TriMesh, f64)> {
    let f = scale_factor(gt)?;
    Ok((gt.scaled(f), pred.scaled(f), f))
}

/// Point cloud with a spatial index for repeated nearest-neighbour queries.
#[derive(Debug, Clone)]
pub struct IndexedCloud {
    pub cloud: PointCloud,
    tree: KdTree,
}

impl IndexedCloud {
    pub fn new(cloud: PointCloud) -> Result<Self> {
        if cloud.is_empty() {
            return Err(Error::domain("point cloud is empty"));
        }
        let tree = KdTree::new(&cloud.points);
        Ok(Self { cloud, tree })
    }

    /// `(index, squared distance)` of the nearest point to `q`.
    pub fn nearest(&self, q: vec3::Vec3) -> (usize, f64) {
        self.tree.nearest(q).expect("non-empty cloud")
    }
}

/// Nearest-neighbour correspondences in both directions between two clouds.
#[derive(Debug, Clone)]
pub struct Correspondence {
    /// For each point of `a`: nearest index in `b` and squared distance.
    pub a_to_b: Vec<(usize, f64)>,
    /// For each point of `b`: nearest index in `a` and squared distance.
    pub b_to_a: Vec<(usize, f64)>,
}

impl Correspondence {
    pub fn new(a: &IndexedCloud, b: &IndexedCloud) -> Self {
        Self {
            a_to_b: a.cloud.points.iter().map(|&p| b.nearest(p)).collect(),
            b_to_a: b.cloud.points.iter().map(|&p| a.nearest(p)).collect(),
        }
    }

    pub fn chamfer(&self) -> f64 {
        mean(self.a_to_b.iter().map(|m| m.1)) + mean(self.b_to_a.iter().map(|m| m.1))
    }

    pub fn f1(&self, threshold: f64) -> f64 {
        let t2 = threshold * threshold;
        let precision = fraction(self.a_to_b.iter().map(|m| m.1 <= t2));
        let recall = fraction(self.b_to_a.iter().map(|m| m.1 <= t2));
        harmonic(precision, recall)
    }

    pub fn normal_consistency(&self, a: &PointCloud, b: &PointCloud) -> Result<f64> {
        let (na, nb) = match (&a.normals, &b.normals) {
            (Some(na), Some(nb)) => (na, nb),
            _ => return Err(Error::domain("normal consistency needs normals on both clouds")),
        };
        let ab = mean(self.a_to_b.iter().enumerate().map(|(i, m)| vec3::dot(na[i], nb[m.0]).abs()));
        let ba = mean(self.b_to_a.iter().enumerate().map(|(i, m)| vec3::dot(nb[i], na[m.0]).abs()));
        Ok(0.5 * (ab + ba))
    }
}

fn mean(it: impl Iterator<Item = f64>) -> f64 {
    let (s, n) = it.fold((0.0, 0usize), |(s, n), v| (s + v, n + 1));
    s / n as f64
}

fn fraction(it: impl Iterator<Item = bool>) -> f64 {
    let (hit, n) = it.fold((0usize, 0usize), |(h, n), b| (h + b as usize, n + 1));
    hit as f64 / n as f64
}

fn harmonic(p: f64, r: f64) -> f64 {
    if p + r == 0.0 {
        0.0
    } else {
        2.0 * p * r / (p + r)
    }
}

fn indexed_pair(a: &PointCloud, b: &PointCloud) -> Result<(IndexedCloud, IndexedCloud)> {
    Ok((IndexedCloud::new(a.clone())?, IndexedCloud::new(b.clone())?))
}

/// Mean squared nearest distance from `a` to `b` plus the same from `b` to `a`.
pub fn chamfer(a: &PointCloud, b: &PointCloud) -> Result<f64> {
    let (ia, ib) = indexed_pair(a, b)?;
    Ok(Correspondence::new(&ia, &ib).chamfer())
}

/// Harmonic mean of the fraction of `a` within `threshold` of `b` (precision)
/// and of `b` within `threshold` of `a` (recall).
pub fn f1_at(a: &PointCloud, b: &PointCloud, threshold: f64) -> Result<f64> {
    if !(threshold > 0.0) {
        return Err(Error::domain("F1 threshold must be positive"));
    }
    let (ia, ib) = indexed_pair(a, b)?;
    Ok(Correspondence::new(&ia, &ib).f1(threshold))
}

/// Mean absolute cosine between each point's normal and its nearest
/// neighbour's normal, averaged over both directions.
pub fn normal_consistency(a: &PointCloud, b: &PointCloud) -> Result<f64> {
    if a.normals.is_none() || b.normals.is_none() {
        return Err(Error::domain("normal consistency needs normals on both clouds"));
    }
    let (ia, ib) = indexed_pair(a, b)?;
    Correspondence::new(&ia, &ib).normal_consistency(a, b)
}

/// All shape metrics for clouds already expressed in normalised units.
pub fn score_clouds(a: &IndexedCloud, b: &IndexedCloud) -> Result<ShapeScore> {
    let c = Correspondence::new(a, b);
    Ok(ShapeScore {
        chamfer: c.chamfer(),
        normal_consistency: c.normal_consistency(&a.cloud, &b.cloud)?,
        f1: F1_THRESHOLDS
            .iter()
            .map(|&t| F1At {
                threshold: t,
                value: c.f1(t),
            })
            .collect(),
    })
}

/// Normalises the pair against `gt`, samples `samples` points from each with
/// the same seed, and scores the prediction.
pub fn score_meshes(gt: &TriMesh, pred: &TriMesh, samples: usize, seed: u64) -> Result<ShapeScore> {
    let (gt, pred, _) = normalize_scale(gt, pred)?;
    let g = IndexedCloud::new(sample_surface(&gt, samples, seed)?)?;
    let p = IndexedCloud::new(sample_surface(&pred, samples, seed)?)?;
    score_clouds(&p, &g)
}
