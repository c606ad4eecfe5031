use std::fmt::Write as _;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::quat::Quaternion;
use super::vec3::{self, Vec3};
use crate::error::{Error, Result};

/// Indexed triangle mesh with 64-bit vertex coordinates.
///
/// Construction validates indices and drops zero-area faces.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TriMesh {
    vertices: Vec<Vec3>,
    faces: Vec<[usize; 3]>,
}

impl TriMesh {
    pub fn new(vertices: Vec<Vec3>, faces: Vec<[usize; 3]>) -> Result<Self> {
        let n = vertices.len();
        if let Some(v) = vertices.iter().find(|v| v.iter().any(|c| !c.is_finite())) {
            return Err(Error::domain(format!("non-finite vertex {v:?}")));
        }
        if let Some(f) = faces.iter().find(|f| f.iter().any(|&i| i >= n)) {
            return Err(Error::domain(format!(
                "face {f:?} indexes past {n} vertices"
            )));
        }
        let faces = faces
            .into_iter()
            .filter(|f| triangle_area(vertices[f[0]], vertices[f[1]], vertices[f[2]]) > 0.0)
            .collect();
        Ok(Self { vertices, faces })
    }

    pub fn vertices(&self) -> &[Vec3] {
        &self.vertices
    }

    pub fn faces(&self) -> &[[usize; 3]] {
        &self.faces
    }

    pub fn is_empty(&self) -> bool {
        self.faces.is_empty()
    }

    pub fn triangle(&self, face: usize) -> [Vec3; 3] {
        let f = self.faces[face];
        [self.vertices[f[0]], self.vertices[f[1]], self.vertices[f[2]]]
    }

    pub fn face_area(&self, face: usize) -> f64 {
        let [a, b, c] = self.triangle(face);
        triangle_area(a, b, c)
    }

    /// Unit normal following the counter-clockwise winding.
    pub fn face_normal(&self, face: usize) -> Vec3 {
        let [a, b, c] = self.triangle(face);
        let n = vec3::cross(vec3::sub(b, a), vec3::sub(c, a));
        vec3::scale(n, 1.0 / vec3::norm(n))
    }

    /// Axis-aligned bounds `(min, max)` over vertices referenced by faces.
    pub fn bounds(&self) -> Option<(Vec3, Vec3)> {
        let mut it = self.faces.iter().flatten().map(|&i| self.vertices[i]);
        let first = it.next()?;
        Some(it.fold((first, first), |(lo, hi), v| {
            (
                [lo[0].min(v[0]), lo[1].min(v[1]), lo[2].min(v[2])],
                [hi[0].max(v[0]), hi[1].max(v[1]), hi[2].max(v[2])],
            )
        }))
    }

    /// Radius of the smallest origin-centred sphere containing the mesh.
    pub fn radius(&self) -> f64 {
        self.vertices.iter().map(|&v| vec3::norm(v)).fold(0.0, f64::max)
    }

    pub fn map_vertices(&self, f: impl Fn(Vec3) -> Vec3) -> TriMesh {
        TriMesh {
            vertices: self.vertices.iter().map(|&v| f(v)).collect(),
            faces: self.faces.clone(),
        }
    }

    pub fn scaled(&self, s: f64) -> TriMesh {
        self.map_vertices(|v| vec3::scale(v, s))
    }

    /// Parses the `v` and `f` records of a Wavefront OBJ document.
    ///
    /// Polygon faces are fan-triangulated; `v/vt/vn` index triplets keep the
    /// vertex index only. All other records are ignored.
    pub fn from_obj_str(text: &str) -> Result<Self> {
        let mut vertices = Vec::new();
        let mut faces = Vec::new();
        for (lineno, record) in text.lines().enumerate() {
            let line = lineno + 1;
            let mut fields = record.split_whitespace();
            match fields.next() {
                Some("v") => {
                    let mut p = [0.0; 3];
                    for (k, c) in p.iter_mut().enumerate() {
                        let tok = fields.next().ok_or_else(|| obj_err(line, "v", "missing coordinate"))?;
                        *c = tok.parse().map_err(|_| {
                            obj_err(line, "v", &format!("bad coordinate {k}: `{tok}`"))
                        })?;
                    }
                    vertices.push(p);
                }
                Some("f") => {
                    let idx = fields
                        .map(|tok| {
                            let head = tok.split('/').next().unwrap_or("");
                            match head.parse::<usize>() {
                                Ok(i) if i >= 1 => Ok(i - 1),
                                _ => Err(obj_err(line, "f", &format!("bad vertex index `{tok}`"))),
                            }
                        })
                        .collect::<Result<Vec<_>>>()?;
                    if idx.len() < 3 {
                        return Err(obj_err(line, "f", "face needs at least 3 vertices"));
                    }
                    for k in 1..idx.len() - 1 {
                        faces.push([idx[0], idx[k], idx[k + 1]]);
                    }
                }
                _ => {}
            }
        }
        Self::new(vertices, faces)
    }

    pub fn to_obj_string(&self) -> String {
        let mut out = String::new();
        for v in &self.vertices {
            let _ = writeln!(out, "v {} {} {}", v[0], v[1], v[2]);
        }
        for f in &self.faces {
            let _ = writeln!(out, "f {} {} {}", f[0] + 1, f[1] + 1, f[2] + 1);
        }
        out
    }

    pub fn load_obj(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_obj_str(&text)
    }

    pub fn save_obj(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        std::fs::write(path, self.to_obj_string()).map_err(|e| Error::io(path, e))
    }
}

fn obj_err(line: usize, field: &str, message: &str) -> Error {
    Error::Parse {
        line,
        field: field.to_owned(),
        message: message.to_owned(),
    }
}

pub fn triangle_area(a: Vec3, b: Vec3, c: Vec3) -> f64 {
    0.5 * vec3::norm(vec3::cross(vec3::sub(b, a), vec3::sub(c, a)))
}

/// Rotation, translation and per-axis scale of an object in camera space.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Pose {
    pub rotation: Quaternion,
    pub translation: Vec3,
    pub scale: Vec3,
}

impl Default for Pose {
    fn default() -> Self {
        Self {
            rotation: Quaternion::IDENTITY,
            translation: [0.0; 3],
            scale: [1.0; 3],
        }
    }
}

impl Pose {
    pub fn new(rotation: Quaternion, translation: Vec3, scale: Vec3) -> Result<Self> {
        if scale.iter().any(|&s| !(s > 0.0) || !s.is_finite()) {
            return Err(Error::domain(format!("pose scale must be positive, got {scale:?}")));
        }
        if translation.iter().any(|t| !t.is_finite()) {
            return Err(Error::domain("pose translation must be finite"));
        }
        Ok(Self {
            rotation: rotation.normalize()?,
            translation,
            scale,
        })
    }

    /// `v -> R (s * v) + t`.
    pub fn transform_point(&self, v: Vec3) -> Vec3 {
        vec3::add(self.rotation.rotate(vec3::mul(self.scale, v)), self.translation)
    }
}

/// Places `mesh` in camera space: scale, then rotate, then translate.
pub fn apply_pose(pose: &Pose, mesh: &TriMesh) -> TriMesh {
    mesh.map_vertices(|v| pose.transform_point(v))
}
