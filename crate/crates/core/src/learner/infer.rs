//! Forward passes used at inference time.

use serde::{Deserialize, Serialize};

use super::features::{mask_features, DetectionRegion};
use super::model::{heads_forward, stream_forward, EncoderParams};
use crate::error::Result;
use crate::geometry::Quaternion;
use crate::pose::{decode_center, decode_rotation, RotationBins};

/// Embedding and decoded pose of one detection region.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RegionPrediction {
    pub embedding: Vec<f64>,
    pub bin_index: usize,
    pub rotation: Quaternion,
    /// Predicted 2D object centre, pixels.
    pub center_px: [f64; 2],
}

pub fn encode_view(params: &EncoderParams, view: &DetectionRegion) -> Result<Vec<f64>> {
    Ok(stream_forward(&params.view, &mask_features(view)?)?.embedding)
}

pub fn predict_region(params: &EncoderParams, bins: &RotationBins, region: &DetectionRegion) -> Result<RegionPrediction> {
    let cache = stream_forward(&params.image, &mask_features(region)?)?;
    let out = heads_forward(&params.heads, &params.config, &cache.pooled, region.class_id)?;
    let bin_index = out
        .logits
        .iter()
        .enumerate()
        .fold((0, f64::NEG_INFINITY), |best, (i, &v)| if v > best.1 { (i, v) } else { best })
        .0;
    Ok(RegionPrediction {
        embedding: cache.embedding,
        bin_index,
        rotation: decode_rotation(bin_index, out.delta, bins, region.class_id)?,
        center_px: decode_center(&region.bbox, out.center)?,
    })
}
