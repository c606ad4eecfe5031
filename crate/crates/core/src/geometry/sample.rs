use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::mesh::TriMesh;
use super::vec3::{self, Vec3};
use crate::error::{Error, Result};

/// Points with optional unit normals (one per point when present).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PointCloud {
    pub points: Vec<Vec3>,
    pub normals: Option<Vec<Vec3>>,
}

impl PointCloud {
    pub fn new(points: Vec<Vec3>, normals: Option<Vec<Vec3>>) -> Result<Self> {
        if let Some(n) = &normals {
            if n.len() != points.len() {
                return Err(Error::domain(format!(
                    "{} normals for {} points",
                    n.len(),
                    points.len()
                )));
            }
            if n.iter().any(|v| (vec3::norm(*v) - 1.0).abs() > 1e-6) {
                return Err(Error::domain("normals must have unit length"));
            }
        }
        Ok(Self { points, normals })
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn scaled(&self, s: f64) -> PointCloud {
        PointCloud {
            points: self.points.iter().map(|&p| vec3::scale(p, s)).collect(),
            normals: self.normals.clone(),
        }
    }

    /// Same points with every normal negated.
    pub fn flipped_normals(&self) -> PointCloud {
        PointCloud {
            points: self.points.clone(),
            normals: self
                .normals
                .as_ref()
                .map(|ns| ns.iter().map(|&n| vec3::scale(n, -1.0)).collect()),
        }
    }
}

/// Draws `n` surface points, area-weighted across faces and uniform within
/// each face, carrying the face normal. Deterministic for a given seed.
pub fn sample_surface(mesh: &TriMesh, n: usize, seed: u64) -> Result<PointCloud> {
    Ok(sample_surface_with_faces(mesh, n, seed)?.0)
}

/// As [`sample_surface`], also returning the face each point came from.
pub fn sample_surface_with_faces(
    mesh: &TriMesh,
    n: usize,
    seed: u64,
) -> Result<(PointCloud, Vec<usize>)> {
    if mesh.is_empty() {
        return Err(Error::domain("cannot sample an empty mesh"));
    }
    if n == 0 {
        return Err(Error::domain("sample count must be at least 1"));
    }
    let mut cumulative = Vec::with_capacity(mesh.faces().len());
    let mut total = 0.0;
    for f in 0..mesh.faces().len() {
        total += mesh.face_area(f);
        cumulative.push(total);
    }
    let normals: Vec<Vec3> = (0..mesh.faces().len()).map(|f| mesh.face_normal(f)).collect();

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut points = Vec::with_capacity(n);
    let mut point_normals = Vec::with_capacity(n);
    let mut faces = Vec::with_capacity(n);
    for _ in 0..n {
        let target = rng.random::<f64>() * total;
        let face = cumulative
            .partition_point(|&c| c <= target)
            .min(cumulative.len() - 1);
        let [a, b, c] = mesh.triangle(face);
        let (r1, r2): (f64, f64) = (rng.random(), rng.random());
        let s = r1.sqrt();
        let (wa, wb, wc) = (1.0 - s, s * (1.0 - r2), s * r2);
        points.push([
            wa * a[0] + wb * b[0] + wc * c[0],
            wa * a[1] + wb * b[1] + wc * c[1],
            wa * a[2] + wb * b[2] + wc * c[2],
        ]);
        point_normals.push(normals[face]);
        faces.push(face);
    }
    Ok((
        PointCloud {
            points,
            normals: Some(point_normals),
        },
        faces,
    ))
}
