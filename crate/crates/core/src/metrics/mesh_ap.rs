//! Mesh AP: a prediction matches a ground truth of the same class when the
//! F1 score of their surface samples (at a distance threshold in units where
//! the ground truth's longest bbox edge is 10) exceeds the swept threshold.

use super::ap::{ApInput, CocoAp, ScoredInput};
use super::shape::{scale_factor, Correspondence, IndexedCloud};
use crate::error::Result;
use crate::geometry::{sample_surface, TriMesh};

/// F1 distance threshold of the Pix3D-style protocol.
pub const MESH_F1_THRESHOLD: f64 = 0.3;
/// F1 distance threshold of the ScanNet-style protocol.
pub const MESH_F1_THRESHOLD_SCANNET: f64 = 0.5;

/// Surface sample of a posed mesh, drawn once and reused for every pairing
/// and threshold.
#[derive(Debug, Clone)]
pub struct MeshPayload {
    pub cloud: IndexedCloud,
    /// `10 / longest bbox edge` of this mesh; used when it is the ground truth.
    pub factor: f64,
}

impl MeshPayload {
    pub fn from_mesh(mesh: &TriMesh, samples: usize, seed: u64) -> Result<Self> {
        Ok(Self {
            factor: scale_factor(mesh)?,
            cloud: IndexedCloud::new(sample_surface(mesh, samples, seed)?)?,
        })
    }
}

/// F1 of `pred` against `gt` after normalising both by `gt`'s extent.
pub fn normalized_f1(pred: &MeshPayload, gt: &MeshPayload, threshold: f64) -> f64 {
    Correspondence::new(&pred.cloud, &gt.cloud).f1(threshold / gt.factor)
}

pub fn mesh_ap(input: &ApInput<MeshPayload>, f1_threshold: f64) -> Result<CocoAp> {
    Ok(ScoredInput::new(input, |p, g| normalized_f1(p, g, f1_threshold))?.coco())
}
