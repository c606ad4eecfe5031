//! Region-of-interest sampling shared by scene regions and rendered views.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::BBox;
use crate::image::{BitMask, GrayImage};
use crate::learner::{DetectionRegion, FeatureMap};

/// Input channels: intensity, constant one, x ramp, y ramp.
pub const ROI_CHANNELS: usize = 4;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RoiConfig {
    /// Output resolution (square).
    pub size: usize,
    /// Side of the square window relative to the longer box side.
    pub context: f64,
    /// Bilinear samples per bin along each axis.
    pub samples: usize,
}

impl Default for RoiConfig {
    fn default() -> Self {
        Self {
            size: 32,
            context: 1.1,
            samples: 2,
        }
    }
}

/// Square window centred on `b` so that aspect ratio survives resampling.
pub fn square_roi(b: &BBox, context: f64) -> Result<BBox> {
    let side = b.width().max(b.height()) * context;
    let [cx, cy] = b.center();
    BBox::new(cx - side / 2.0, cy - side / 2.0, cx + side / 2.0, cy + side / 2.0)
}

/// Average of `samples x samples` bilinear taps per output bin.
fn resample(roi: &BBox, size: usize, samples: usize, at: impl Fn(f64, f64) -> f64) -> Vec<f64> {
    let bw = roi.width() / size as f64;
    let bh = roi.height() / size as f64;
    let norm = 1.0 / (samples * samples) as f64;
    let mut out = vec![0.0; size * size];
    for j in 0..size {
        for i in 0..size {
            let mut acc = 0.0;
            for sy in 0..samples {
                for sx in 0..samples {
                    let x = roi.xmin + (i as f64 + (sx as f64 + 0.5) / samples as f64) * bw;
                    let y = roi.ymin + (j as f64 + (sy as f64 + 0.5) / samples as f64) * bh;
                    acc += at(x, y);
                }
            }
            out[j * size + i] = acc * norm;
        }
    }
    out
}

/// Crops image and mask inside the square window around `det_box`.
pub fn crop_region(
    image: &GrayImage,
    mask: &BitMask,
    det_box: BBox,
    class_id: u32,
    cfg: &RoiConfig,
) -> Result<DetectionRegion> {
    if image.width != mask.width || image.height != mask.height {
        return Err(Error::domain("image and mask sizes differ"));
    }
    if cfg.size == 0 || cfg.samples == 0 || !(cfg.context > 0.0) {
        return Err(Error::domain("invalid ROI configuration"));
    }
    let roi = square_roi(&det_box, cfg.context)?;
    let n = cfg.size;
    let intensity = resample(&roi, n, cfg.samples, |x, y| image.sample(x, y));
    let coverage = resample(&roi, n, cfg.samples, |x, y| mask.sample(x, y));
    let mut m = BitMask::new(n, n);
    for (k, &c) in coverage.iter().enumerate() {
        m.data[k] = c >= 0.5;
    }
    let mut features = FeatureMap::zeros(ROI_CHANNELS, n, n);
    features.plane_mut(0).copy_from_slice(&intensity);
    features.plane_mut(1).fill(1.0);
    for j in 0..n {
        for i in 0..n {
            let k = j * n + i;
            features.plane_mut(2)[k] = 2.0 * (i as f64 + 0.5) / n as f64 - 1.0;
            features.plane_mut(3)[k] = 2.0 * (j as f64 + 0.5) / n as f64 - 1.0;
        }
    }
    Ok(DetectionRegion {
        bbox: det_box,
        roi,
        mask: m,
        class_id,
        features,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn square_window_keeps_centre() {
        let b = BBox::new(10.0, 20.0, 30.0, 30.0).unwrap();
        let r = square_roi(&b, 1.0).unwrap();
        assert_eq!(r.center(), b.center());
        assert_eq!(r.width(), 20.0);
        assert_eq!(r.height(), 20.0);
    }

    #[test]
    fn identity_crop_reproduces_pixels() {
        let mut img = GrayImage::new(8, 8);
        let mut mask = BitMask::new(8, 8);
        for y in 0..8 {
            for x in 0..8 {
                img.set(x, y, (x * 8 + y) as f64 / 64.0);
                mask.set(x, y, x >= 4);
            }
        }
        let cfg = RoiConfig { size: 8, context: 1.0, samples: 1 };
        let r = crop_region(&img, &mask, BBox::new(0.0, 0.0, 8.0, 8.0).unwrap(), 2, &cfg).unwrap();
        assert_eq!(r.features.plane(0), img.data.as_slice());
        assert_eq!(r.mask, mask);
        assert_eq!(r.features.plane(2)[0], -1.0 + 1.0 / 8.0);
    }
}
