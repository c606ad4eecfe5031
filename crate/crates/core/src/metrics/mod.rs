//! Evaluation suite: Chamfer distance, normal consistency, F1 at distance
//! thresholds, scale normalisation, box/mask IoU and detection-style AP
//! including mesh AP.

pub mod ap;
pub mod iou;
pub mod mesh_ap;
pub mod shape;

pub use ap::{
    average_precision, coco_average_precision, coco_thresholds, ApGroundTruth, ApImage,
    ApInput, ApPrediction, ClassAp, CocoAp, ScoredInput,
};
pub use iou::{box_iou, mask_iou};
pub use mesh_ap::{mesh_ap, normalized_f1, MeshPayload, MESH_F1_THRESHOLD, MESH_F1_THRESHOLD_SCANNET};
pub use shape::{
    chamfer, f1_at, normal_consistency, normalize_scale, score_clouds, score_meshes,
    Correspondence, F1At, IndexedCloud, ShapeScore, F1_THRESHOLDS, METRIC_SAMPLES,
    NORMALIZED_EXTENT,
};
