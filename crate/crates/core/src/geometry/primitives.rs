//! Parametric solids used as synthetic CAD models.
//!
//! Every constructor returns a closed, outward-wound mesh centred on the
//! centre of its axis-aligned bounding box.

use super::mesh::TriMesh;
use super::vec3::{self, Vec3};

pub fn unit_cube() -> TriMesh {
    cuboid([1.0, 1.0, 1.0])
}

/// Axis-aligned box with the given edge lengths.
pub fn cuboid(size: Vec3) -> TriMesh {
    let [hx, hy, hz] = [size[0] / 2.0, size[1] / 2.0, size[2] / 2.0];
    frustum([hx, hz], [hx, hz], 2.0 * hy)
}

/// Box whose top face (at -y, "up" in the camera frame) is shrunk to
/// `top` half-extents while the bottom keeps `bottom` half-extents.
pub fn frustum(bottom: [f64; 2], top: [f64; 2], height: f64) -> TriMesh {
    let hy = height / 2.0;
    let mut v = Vec::with_capacity(8);
    for (y, [hx, hz]) in [(hy, bottom), (-hy, top)] {
        v.extend_from_slice(&[[-hx, y, -hz], [hx, y, -hz], [hx, y, hz], [-hx, y, hz]]);
    }
    let quads = [
        [0, 1, 2, 3],
        [4, 7, 6, 5],
        [0, 4, 5, 1],
        [1, 5, 6, 2],
        [2, 6, 7, 3],
        [3, 7, 4, 0],
    ];
    let mut faces = Vec::with_capacity(12);
    for q in quads {
        faces.push([q[0], q[1], q[2]]);
        faces.push([q[0], q[2], q[3]]);
    }
    finish(v, faces)
}

/// Cylinder of the given radius whose axis runs along x.
pub fn cylinder(radius: f64, length: f64, segments: usize) -> TriMesh {
    let segments = segments.max(3);
    let ring: Vec<[f64; 2]> = (0..segments)
        .map(|i| {
            let a = std::f64::consts::TAU * i as f64 / segments as f64;
            [radius * a.cos(), radius * a.sin()]
        })
        .collect();
    let prism = extrude_star(&ring, length);
    // Extrusion runs along z; rotate so the axis lies along x.
    prism.map_vertices(|p| [p[2], p[1], -p[0]])
}

/// L-shaped bracket: an `L` profile of the given width (along z), height
/// and wall thickness, extruded by `depth` along x.
pub fn bracket(width: f64, height: f64, thickness: f64, depth: f64) -> TriMesh {
    let t = thickness.min(width * 0.9).min(height * 0.9);
    let profile = [
        [0.0, 0.0],
        [width, 0.0],
        [width, t],
        [t, t],
        [t, height],
        [0.0, height],
    ];
    extrude_star(&profile, depth).map_vertices(|p| [p[2], p[1], -p[0]])
}

/// Triangular prism (a ramp): right-triangle profile in the y/z plane
/// extruded by `depth` along x.
pub fn wedge(run: f64, rise: f64, depth: f64) -> TriMesh {
    extrude_star(&[[0.0, 0.0], [run, 0.0], [0.0, rise]], depth).map_vertices(|p| [p[2], p[1], -p[0]])
}

/// Extrudes a polygon that is star-shaped with respect to its first
/// vertex along z.
fn extrude_star(profile: &[[f64; 2]], depth: f64) -> TriMesh {
    let n = profile.len();
    let signed_area: f64 = (0..n)
        .map(|i| {
            let (a, b) = (profile[i], profile[(i + 1) % n]);
            a[0] * b[1] - b[0] * a[1]
        })
        .sum();
    let ccw: Vec<[f64; 2]> = if signed_area >= 0.0 {
        profile.to_vec()
    } else {
        profile.iter().rev().copied().collect()
    };
    let hz = depth / 2.0;
    let mut v = Vec::with_capacity(2 * n);
    for z in [hz, -hz] {
        v.extend(ccw.iter().map(|p| [p[0], p[1], z]));
    }
    let mut faces = Vec::new();
    for k in 1..n - 1 {
        faces.push([0, k, k + 1]);
        faces.push([n, n + k + 1, n + k]);
    }
    for i in 0..n {
        let j = (i + 1) % n;
        faces.push([i, n + i, n + j]);
        faces.push([i, n + j, j]);
    }
    finish(v, faces)
}

fn finish(vertices: Vec<Vec3>, mut faces: Vec<[usize; 3]>) -> TriMesh {
    let volume: f64 = faces
        .iter()
        .map(|f| vec3::dot(vertices[f[0]], vec3::cross(vertices[f[1]], vertices[f[2]])))
        .sum();
    if volume < 0.0 {
        for f in &mut faces {
            f.swap(1, 2);
        }
    }
    let mesh = TriMesh::new(vertices, faces).expect("primitive construction is valid");
    let (lo, hi) = mesh.bounds().expect("primitive has faces");
    let c = vec3::scale(vec3::add(lo, hi), 0.5);
    mesh.map_vertices(|p| vec3::sub(p, c))
}

#[cfg(test)]
mod tests {
    use super::*;

    /// Divergence theorem: a closed outward-wound mesh has positive volume.
    fn signed_volume(m: &TriMesh) -> f64 {
        (0..m.faces().len())
            .map(|f| {
                let [a, b, c] = m.triangle(f);
                vec3::dot(a, vec3::cross(b, c)) / 6.0
            })
            .sum()
    }

    fn centred(m: &TriMesh) -> bool {
        let (lo, hi) = m.bounds().unwrap();
        (0..3).all(|i| (lo[i] + hi[i]).abs() < 1e-12)
    }

    #[test]
    fn volumes_match_closed_forms() {
        let b = cuboid([1.0, 2.0, 3.0]);
        assert!((signed_volume(&b) - 6.0).abs() < 1e-12);
        let w = wedge(2.0, 1.0, 3.0);
        assert!((signed_volume(&w) - 3.0).abs() < 1e-12);
        let l = bracket(2.0, 3.0, 0.5, 1.0);
        let expected = (2.0 * 0.5 + 0.5 * 2.5) * 1.0;
        assert!((signed_volume(&l) - expected).abs() < 1e-12);
        let c = cylinder(1.0, 2.0, 64);
        let polygon = 0.5 * 64.0 * (std::f64::consts::TAU / 64.0).sin();
        assert!((signed_volume(&c) - polygon * 2.0).abs() < 1e-9);
        let f = frustum([1.0, 1.0], [0.5, 0.5], 1.0);
        // prismatoid: h/6 (A1 + 4 Am + A2)
        let expected = 1.0 / 6.0 * (4.0 + 4.0 * 2.25 + 1.0);
        assert!((signed_volume(&f) - expected).abs() < 1e-12);
    }

    #[test]
    fn primitives_are_centred() {
        for m in [
            cuboid([1.0, 2.0, 3.0]),
            wedge(2.0, 1.0, 3.0),
            bracket(2.0, 3.0, 0.5, 1.0),
            cylinder(0.4, 2.0, 12),
            frustum([1.0, 0.5], [0.3, 0.2], 1.0),
        ] {
            assert!(centred(&m));
        }
    }

    #[test]
    fn primitives_mirror_symmetric_in_x() {
        // Horizontal image flips rely on every model equalling its x mirror.
        for m in [
            cuboid([1.0, 2.0, 3.0]),
            wedge(2.0, 1.0, 3.0),
            bracket(2.0, 3.0, 0.5, 1.0),
            cylinder(0.4, 2.0, 12),
            frustum([1.0, 0.5], [0.3, 0.2], 1.0),
        ] {
            for v in m.vertices() {
                let mirrored = [-v[0], v[1], v[2]];
                assert!(m
                    .vertices()
                    .iter()
                    .any(|w| (0..3).all(|i| (w[i] - mirrored[i]).abs() < 1e-12)));
            }
        }
    }
}
