//! Region feature maps and mask gating.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::BBox;
use crate::image::BitMask;

/// Channel-major `channels x height x width` tensor.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureMap {
    pub channels: usize,
    pub height: usize,
    pub width: usize,
    pub data: Vec<f64>,
}

impl FeatureMap {
    pub fn zeros(channels: usize, height: usize, width: usize) -> Self {
        Self {
            channels,
            height,
            width,
            data: vec![0.0; channels * height * width],
        }
    }

    pub fn plane(&self, c: usize) -> &[f64] {
        let n = self.height * self.width;
        &self.data[c * n..(c + 1) * n]
    }

    pub fn plane_mut(&mut self, c: usize) -> &mut [f64] {
        let n = self.height * self.width;
        &mut self.data[c * n..(c + 1) * n]
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }
}

/// A detected object: its box, ROI-resolution mask, class and features.
#[derive(Debug, Clone, PartialEq)]
pub struct DetectionRegion {
    /// Detection box in image pixels.
    pub bbox: BBox,
    /// Square sampling window derived from `bbox`.
    pub roi: BBox,
    pub mask: BitMask,
    pub class_id: u32,
    pub features: FeatureMap,
}

/// `M * F`, broadcasting the mask over channels.
pub fn mask_features(region: &DetectionRegion) -> Result<FeatureMap> {
    let f = &region.features;
    if region.mask.width != f.width || region.mask.height != f.height {
        return Err(Error::domain(format!(
            "mask {}x{} does not match features {}x{}",
            region.mask.width, region.mask.height, f.width, f.height
        )));
    }
    let mut out = f.clone();
    let n = f.width * f.height;
    for c in 0..f.channels {
        for (k, v) in out.data[c * n..(c + 1) * n].iter_mut().enumerate() {
            if !region.mask.data[k] {
                *v = 0.0;
            }
        }
    }
    Ok(out)
}
