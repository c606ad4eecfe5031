//! Dataset directory layout:
//!
//! ```text
//! dataset.json             spec, classes, intrinsics, objects, splits
//! meshes/<object>.obj
//! renders/<object>/<view>.pgm
//! images/<image>.pgm
//! annotations.jsonl        one record per object instance
//! ```

use std::collections::BTreeMap;
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use serde_json::{json, Map, Value};

use super::synth::{CadEntry, CanonicalView, Dataset, DatasetSpec, Family, RegionGt, Sample, Split};
use crate::error::{Error, Result};
use crate::geometry::{BBox, Pose, Quaternion, TriMesh};
use crate::image::{BitMask, GrayImage};
use crate::pose::CameraIntrinsics;

const LAYOUT_VERSION: u32 = 1;

#[derive(Debug, Serialize, Deserialize)]
struct ViewRecord {
    view_id: u32,
    rotation: Quaternion,
    render: String,
}

#[derive(Debug, Serialize, Deserialize)]
struct ObjectRecord {
    object_id: u32,
    class_id: u32,
    family: Family,
    heldout: bool,
    mesh: String,
    views: Vec<ViewRecord>,
}

#[derive(Debug, Serialize, Deserialize)]
struct Header {
    layout_version: u32,
    spec: DatasetSpec,
    classes: Vec<String>,
    intrinsics: CameraIntrinsics,
    objects: Vec<ObjectRecord>,
    splits: BTreeMap<Split, Vec<u32>>,
}

fn create_dir(path: &Path) -> Result<()> {
    fs::create_dir_all(path).map_err(|e| Error::io(path, e))
}

fn image_path(image_id: u32) -> String {
    format!("images/{image_id:06}.pgm")
}

pub fn save_dataset(dir: &Path, data: &Dataset) -> Result<()> {
    create_dir(&dir.join("meshes"))?;
    let mut objects = Vec::new();
    for cad in &data.cads {
        let mesh_rel = format!("meshes/{:04}.obj", cad.object_id);
        cad.mesh.save_obj(dir.join(&mesh_rel))?;
        let render_dir = dir.join(format!("renders/{:04}", cad.object_id));
        create_dir(&render_dir)?;
        let mut views = Vec::new();
        for v in &cad.views {
            let rel = format!("renders/{:04}/{:02}.pgm", cad.object_id, v.view_id);
            v.image.save_pgm(dir.join(&rel))?;
            views.push(ViewRecord {
                view_id: v.view_id,
                rotation: v.rotation,
                render: rel,
            });
        }
        objects.push(ObjectRecord {
            object_id: cad.object_id,
            class_id: cad.class_id,
            family: cad.family,
            heldout: cad.heldout,
            mesh: mesh_rel,
            views,
        });
    }
    let mut splits: BTreeMap<Split, Vec<u32>> = BTreeMap::new();
    for s in &data.samples {
        splits.entry(s.split).or_default().push(s.image_id);
    }
    let header = Header {
        layout_version: LAYOUT_VERSION,
        spec: data.spec.clone(),
        classes: data.classes.clone(),
        intrinsics: data.intrinsics,
        objects,
        splits,
    };
    let path = dir.join("dataset.json");
    fs::write(&path, serde_json::to_string_pretty(&header)?).map_err(|e| Error::io(&path, e))?;
    save_annotations(&dir.join("annotations.jsonl"), &data.samples)
}

pub fn load_dataset(dir: &Path) -> Result<Dataset> {
    let path = dir.join("dataset.json");
    let text = fs::read_to_string(&path).map_err(|e| Error::io(&path, e))?;
    let header: Header = serde_json::from_str(&text)?;
    if header.layout_version != LAYOUT_VERSION {
        return Err(Error::Format(format!(
            "unsupported dataset layout version {}",
            header.layout_version
        )));
    }
    let mut cads = Vec::new();
    for (i, o) in header.objects.iter().enumerate() {
        if o.object_id as usize != i {
            return Err(Error::Format("object ids must be dense and ordered".into()));
        }
        let views = o
            .views
            .iter()
            .map(|v| {
                Ok(CanonicalView {
                    view_id: v.view_id,
                    rotation: v.rotation,
                    image: GrayImage::load_pgm(dir.join(&v.render))?,
                })
            })
            .collect::<Result<_>>()?;
        cads.push(CadEntry {
            object_id: o.object_id,
            class_id: o.class_id,
            family: o.family,
            mesh: TriMesh::load_obj(dir.join(&o.mesh))?,
            heldout: o.heldout,
            views,
        });
    }
    let samples = load_annotations(&dir.join("annotations.jsonl"))?;
    for s in &samples {
        for r in &s.regions {
            if r.object_id as usize >= cads.len() {
                return Err(Error::lookup(format!(
                    "image {} references unknown model {}",
                    s.image_id, r.object_id
                )));
            }
        }
    }
    Ok(Dataset {
        spec: header.spec,
        classes: header.classes,
        intrinsics: header.intrinsics,
        cads,
        samples,
    })
}

/// Writes one JSON record per region and the referenced images, which are
/// stored next to the annotation file under `images/`.
pub fn save_annotations(path: &Path, samples: &[Sample]) -> Result<()> {
    let root = path.parent().unwrap_or(Path::new("."));
    create_dir(&root.join("images"))?;
    let mut out = Vec::new();
    for s in samples {
        if s.regions.is_empty() {
            return Err(Error::domain(format!("image {} has no regions to annotate", s.image_id)));
        }
        let rel = image_path(s.image_id);
        s.image.save_pgm(root.join(&rel))?;
        for r in &s.regions {
            let record = json!({
                "image": rel,
                "image_id": s.image_id,
                "split": s.split,
                "class": r.class_id,
                "box": r.bbox,
                "mask": {"size": [r.mask.width, r.mask.height], "counts": r.mask.to_rle()},
                "model_id": r.object_id,
                "rotation": r.pose.rotation,
                "translation": r.pose.translation,
                "scale": r.pose.scale,
                "focal_length": [s.intrinsics.fx, s.intrinsics.fy],
                "principal_point": [s.intrinsics.cx, s.intrinsics.cy],
            });
            serde_json::to_writer(&mut out, &record)?;
            out.push(b'\n');
        }
    }
    let mut f = fs::File::create(path).map_err(|e| Error::io(path, e))?;
    f.write_all(&out).map_err(|e| Error::io(path, e))
}

struct Record<'a> {
    line: usize,
    obj: &'a Map<String, Value>,
}

impl Record<'_> {
    fn err(&self, field: &str, message: impl Into<String>) -> Error {
        Error::Parse {
            line: self.line,
            field: field.to_string(),
            message: message.into(),
        }
    }

    fn get(&self, field: &str) -> Result<&Value> {
        self.obj.get(field).ok_or_else(|| self.err(field, "missing"))
    }

    fn uint(&self, field: &str) -> Result<u32> {
        self.get(field)?
            .as_u64()
            .and_then(|v| u32::try_from(v).ok())
            .ok_or_else(|| self.err(field, "expected a non-negative integer"))
    }

    fn str(&self, field: &str) -> Result<&str> {
        self.get(field)?
            .as_str()
            .ok_or_else(|| self.err(field, "expected a string"))
    }

    fn reals<const N: usize>(&self, field: &str) -> Result<[f64; N]> {
        let arr = self
            .get(field)?
            .as_array()
            .ok_or_else(|| self.err(field, format!("expected an array of {N} numbers")))?;
        if arr.len() != N {
            return Err(self.err(field, format!("expected {N} numbers, got {}", arr.len())));
        }
        let mut out = [0.0; N];
        for (o, v) in out.iter_mut().zip(arr) {
            *o = v
                .as_f64()
                .filter(|x| x.is_finite())
                .ok_or_else(|| self.err(field, "expected finite numbers"))?;
        }
        Ok(out)
    }

    fn mask(&self) -> Result<BitMask> {
        let m = self
            .get("mask")?
            .as_object()
            .ok_or_else(|| self.err("mask", "expected an object with size and counts"))?;
        let inner = Record { line: self.line, obj: m };
        let [w, h] = inner.reals::<2>("size").map_err(|_| self.err("mask", "bad size"))?;
        let counts = m
            .get("counts")
            .and_then(Value::as_array)
            .ok_or_else(|| self.err("mask", "missing counts"))?
            .iter()
            .map(|v| v.as_u64().map(|c| c as usize))
            .collect::<Option<Vec<usize>>>()
            .ok_or_else(|| self.err("mask", "counts must be non-negative integers"))?;
        BitMask::from_rle(w as usize, h as usize, &counts).map_err(|e| self.err("mask", e.to_string()))
    }
}

/// Parses a JSON-lines annotation file; images are resolved relative to
/// the file's directory. Records of one image are grouped into one sample.
pub fn load_annotations(path: &Path) -> Result<Vec<Sample>> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let root: PathBuf = path.parent().unwrap_or(Path::new(".")).to_path_buf();
    let mut samples: BTreeMap<u32, Sample> = BTreeMap::new();
    let mut images: BTreeMap<String, GrayImage> = BTreeMap::new();
    for (i, raw) in text.lines().enumerate() {
        let line = i + 1;
        if raw.trim().is_empty() {
            continue;
        }
        let value: Value = serde_json::from_str(raw).map_err(|e| Error::Parse {
            line,
            field: String::new(),
            message: e.to_string(),
        })?;
        let obj = value.as_object().ok_or_else(|| Error::Parse {
            line,
            field: String::new(),
            message: "record must be a JSON object".into(),
        })?;
        let rec = Record { line, obj };

        let image_rel = rec.str("image")?.to_string();
        let image_id = rec.uint("image_id")?;
        let split: Split = serde_json::from_value(rec.get("split")?.clone())
            .map_err(|e| rec.err("split", e.to_string()))?;
        let class_id = rec.uint("class")?;
        let [x0, y0, x1, y1] = rec.reals::<4>("box")?;
        let bbox = BBox::new(x0, y0, x1, y1).map_err(|e| rec.err("box", e.to_string()))?;
        let mask = rec.mask()?;
        let object_id = rec.uint("model_id")?;
        let [w, x, y, z] = rec.reals::<4>("rotation")?;
        let rotation = Quaternion::new(w, x, y, z)
            .normalize()
            .map_err(|e| rec.err("rotation", e.to_string()))?;
        let translation = rec.reals::<3>("translation")?;
        let scale = rec.reals::<3>("scale")?;
        let pose = Pose::new(rotation, translation, scale).map_err(|e| rec.err("scale", e.to_string()))?;
        let [fx, fy] = match rec.get("focal_length")? {
            Value::Number(n) => {
                let f = n.as_f64().unwrap_or(f64::NAN);
                [f, f]
            }
            _ => rec.reals::<2>("focal_length")?,
        };

        if !images.contains_key(&image_rel) {
            images.insert(image_rel.clone(), GrayImage::load_pgm(root.join(&image_rel))?);
        }
        let image = &images[&image_rel];
        let [cx, cy] = if obj.contains_key("principal_point") {
            rec.reals::<2>("principal_point")?
        } else {
            [image.width as f64 / 2.0, image.height as f64 / 2.0]
        };
        let intrinsics = CameraIntrinsics::new(fx, fy, cx, cy).map_err(|e| rec.err("focal_length", e.to_string()))?;
        if mask.width != image.width || mask.height != image.height {
            return Err(rec.err("mask", "mask size differs from image size"));
        }
        let center_px = intrinsics
            .project(pose.translation)
            .map_err(|e| rec.err("translation", e.to_string()))?;

        let sample = samples.entry(image_id).or_insert_with(|| Sample {
            image_id,
            split,
            image: image.clone(),
            intrinsics,
            regions: Vec::new(),
        });
        if sample.split != split || sample.intrinsics != intrinsics {
            return Err(rec.err("image_id", "records of one image disagree on split or camera"));
        }
        sample.regions.push(RegionGt {
            class_id,
            object_id,
            bbox,
            mask,
            pose,
            center_px,
        });
    }
    Ok(samples.into_values().collect())
}
