//! Per-class rotation bins from K-medoid clustering of training rotations.

use std::collections::BTreeMap;
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::kmedoid;
use crate::geometry::quat::{geodesic_unchecked, Quaternion};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct RotationBins {
    classes: BTreeMap<u32, Vec<Quaternion>>,
}

impl RotationBins {
    pub fn from_map(classes: BTreeMap<u32, Vec<Quaternion>>) -> Result<Self> {
        for (class, bins) in &classes {
            if bins.is_empty() {
                return Err(Error::domain(format!("class {class} has no rotation bins")));
            }
            if bins.iter().any(|q| !q.is_unit()) {
                return Err(Error::domain(format!("class {class} has a non-unit bin")));
            }
        }
        Ok(Self { classes })
    }

    pub fn class(&self, class_id: u32) -> Result<&[Quaternion]> {
        self.classes
            .get(&class_id)
            .map(Vec::as_slice)
            .ok_or_else(|| Error::lookup(format!("no rotation bins for class {class_id}")))
    }

    pub fn bin(&self, class_id: u32, bin_index: usize) -> Result<Quaternion> {
        self.class(class_id)?.get(bin_index).copied().ok_or_else(|| {
            Error::lookup(format!("bin {bin_index} out of range for class {class_id}"))
        })
    }

    pub fn class_ids(&self) -> impl Iterator<Item = u32> + '_ {
        self.classes.keys().copied()
    }

    /// Number of bins of the first class (all classes share `K`).
    pub fn bins_per_class(&self) -> usize {
        self.classes.values().next().map_or(0, Vec::len)
    }

    /// Nearest bin and its geodesic distance; ties go to the lower index.
    pub fn nearest(&self, class_id: u32, q: Quaternion) -> Result<(usize, f64)> {
        let mut best = (0, f64::INFINITY);
        for (i, b) in self.class(class_id)?.iter().enumerate() {
            let d = geodesic_unchecked(*b, q);
            if d < best.1 {
                best = (i, d);
            }
        }
        Ok(best)
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let raw: BTreeMap<u32, Vec<Quaternion>> = serde_json::from_str(text)?;
        Self::from_map(raw)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        fs::write(path, self.to_json()?).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_json(&text)
    }
}

/// Clusters each class's training rotations into `k` geodesic medoids.
pub fn build_bins(
    train_rotations: &BTreeMap<u32, Vec<Quaternion>>,
    k: usize,
    seed: u64,
) -> Result<RotationBins> {
    let mut classes = BTreeMap::new();
    for (&class, rotations) in train_rotations {
        if rotations.len() < k {
            return Err(Error::domain(format!(
                "class {class} has {} rotations, fewer than K = {k}",
                rotations.len()
            )));
        }
        let unit: Vec<Quaternion> = rotations
            .iter()
            .map(|q| q.normalize())
            .collect::<Result<_>>()?;
        let m = kmedoid(&unit, k, |a, b| geodesic_unchecked(*a, *b), seed ^ u64::from(class))?;
        classes.insert(class, m.medoids.iter().map(|&i| unit[i].canonical()).collect());
    }
    RotationBins::from_map(classes)
}
