//! Z-buffered triangle rasterizer with depth shading.
//!
//! A pixel `(i, j)` is covered by a triangle when its centre
//! `(i + 0.5, j + 0.5)` lies inside or on the triangle's edges.

use crate::error::{Error, Result};
use crate::geometry::{BBox, Quaternion, TriMesh, Vec3};
use crate::image::{BitMask, GrayImage};

/// Background id in [`Raster::ids`].
pub const NO_OBJECT: u32 = u32::MAX;

/// Per-pixel nearest depth, owning object id and intensity.
#[derive(Debug, Clone)]
pub struct Raster {
    pub width: usize,
    pub height: usize,
    pub depth: Vec<f64>,
    pub ids: Vec<u32>,
    pub intensity: Vec<f64>,
}

impl Raster {
    pub fn new(width: usize, height: usize) -> Self {
        let n = width * height;
        Self {
            width,
            height,
            depth: vec![f64::INFINITY; n],
            ids: vec![NO_OBJECT; n],
            intensity: vec![0.0; n],
        }
    }

    /// Draws one triangle with screen-space vertices `(u, v, depth)`; the
    /// `shade` closure maps depth to intensity.
    pub fn triangle(&mut self, tri: [Vec3; 3], id: u32, shade: &impl Fn(f64) -> f64) {
        let [a, b, c] = tri;
        let area = edge(a, b, c);
        if area == 0.0 || !area.is_finite() {
            return;
        }
        let umin = a[0].min(b[0]).min(c[0]);
        let umax = a[0].max(b[0]).max(c[0]);
        let vmin = a[1].min(b[1]).min(c[1]);
        let vmax = a[1].max(b[1]).max(c[1]);
        let i0 = ((umin - 0.5).ceil().max(0.0)) as usize;
        let j0 = ((vmin - 0.5).ceil().max(0.0)) as usize;
        let i1 = (umax - 0.5).floor().min(self.width as f64 - 1.0);
        let j1 = (vmax - 0.5).floor().min(self.height as f64 - 1.0);
        if i1 < 0.0 || j1 < 0.0 {
            return;
        }
        let (i1, j1) = (i1 as usize, j1 as usize);
        for j in j0..=j1 {
            for i in i0..=i1 {
                let p = [i as f64 + 0.5, j as f64 + 0.5, 0.0];
                let w0 = edge(b, c, p) / area;
                let w1 = edge(c, a, p) / area;
                let w2 = edge(a, b, p) / area;
                if w0 < 0.0 || w1 < 0.0 || w2 < 0.0 {
                    continue;
                }
                let z = w0 * a[2] + w1 * b[2] + w2 * c[2];
                let k = j * self.width + i;
                if z < self.depth[k] {
                    self.depth[k] = z;
                    self.ids[k] = id;
                    self.intensity[k] = shade(z);
                }
            }
        }
    }

    pub fn image(&self) -> GrayImage {
        GrayImage {
            width: self.width,
            height: self.height,
            data: self.intensity.clone(),
        }
    }

    pub fn mask_of(&self, id: u32) -> BitMask {
        let mut m = BitMask::new(self.width, self.height);
        for (k, &v) in self.ids.iter().enumerate() {
            if v == id {
                m.set(k % self.width, k / self.width, true);
            }
        }
        m
    }
}

/// Twice the signed area of `(a, b, p)` in the image plane.
fn edge(a: Vec3, b: Vec3, p: Vec3) -> f64 {
    (b[0] - a[0]) * (p[1] - a[1]) - (b[1] - a[1]) * (p[0] - a[0])
}

/// Depth shading: nearer surfaces are brighter. `rel` is the depth offset
/// from the object centre in units of the object radius, so values lie in
/// `[0.25, 0.95]` for points on the object. Quantised to 8 bits so that
/// images survive PGM storage unchanged.
pub fn shade(rel: f64) -> f64 {
    let v = (0.6 - 0.35 * rel).clamp(0.05, 1.0);
    (v * 255.0).round() / 255.0
}

/// A rendered view with its silhouette and the tight box of the projected
/// vertices.
#[derive(Debug, Clone)]
pub struct ViewRender {
    pub image: GrayImage,
    pub mask: BitMask,
    pub bbox: BBox,
}

/// Orthographic render of `mesh` rotated by `rotation`, scaled so its
/// bounding sphere spans `1 / 1.1` of the square frame.
pub fn render_view(mesh: &TriMesh, rotation: Quaternion, resolution: usize) -> Result<GrayImage> {
    Ok(render_view_full(mesh, rotation, resolution)?.image)
}

pub fn render_view_full(mesh: &TriMesh, rotation: Quaternion, resolution: usize) -> Result<ViewRender> {
    if mesh.is_empty() {
        return Err(Error::domain("cannot render an empty mesh"));
    }
    if resolution == 0 {
        return Err(Error::domain("render resolution must be positive"));
    }
    let q = rotation.normalize()?;
    let radius = mesh.radius();
    let half = resolution as f64 / 2.0;
    let s = half / (1.1 * radius);
    let to_screen = |v: Vec3| {
        let p = q.rotate(v);
        [half + s * p[0], half + s * p[1], p[2]]
    };
    let screen: Vec<Vec3> = mesh.vertices().iter().map(|&v| to_screen(v)).collect();
    let mut raster = Raster::new(resolution, resolution);
    let shader = |z: f64| shade(z / radius);
    for f in mesh.faces() {
        raster.triangle([screen[f[0]], screen[f[1]], screen[f[2]]], 0, &shader);
    }
    Ok(ViewRender {
        image: raster.image(),
        mask: raster.mask_of(0),
        bbox: screen_bounds(&screen)?,
    })
}

pub fn screen_bounds(points: &[Vec3]) -> Result<BBox> {
    let mut b = [f64::INFINITY, f64::INFINITY, f64::NEG_INFINITY, f64::NEG_INFINITY];
    for p in points {
        b[0] = b[0].min(p[0]);
        b[1] = b[1].min(p[1]);
        b[2] = b[2].max(p[0]);
        b[3] = b[3].max(p[1]);
    }
    BBox::new(b[0], b[1], b[2], b[3])
}
