//! Rotation bin/delta encoding and the box-relative centre codec.

use serde::{Deserialize, Serialize};

use super::bins::RotationBins;
use crate::error::{Error, Result};
use crate::geometry::quat::Quaternion;
use crate::geometry::BBox;

/// Regression targets for one region.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PoseTarget {
    pub bin_index: usize,
    pub delta: Quaternion,
    pub regress_mask: bool,
    pub center_delta: [f64; 2],
}

/// Rotation part of a [`PoseTarget`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RotationTarget {
    pub bin_index: usize,
    pub delta: Quaternion,
    pub regress_mask: bool,
}

/// Nearest bin, `bin^-1 * truth` with `w >= 0`, and the `theta` gate.
pub fn encode_rotation(
    truth: Quaternion,
    bins: &RotationBins,
    class_id: u32,
    theta: f64,
) -> Result<RotationTarget> {
    let truth = truth.normalize()?;
    let (bin_index, dist) = bins.nearest(class_id, truth)?;
    let bin = bins.bin(class_id, bin_index)?;
    Ok(RotationTarget {
        bin_index,
        delta: bin.conj().mul(truth).canonical(),
        regress_mask: dist <= theta,
    })
}

/// `bin * normalize(delta_raw)`; a zero delta falls back to the bin itself.
pub fn decode_rotation(
    bin_index: usize,
    delta_raw: [f64; 4],
    bins: &RotationBins,
    class_id: u32,
) -> Result<Quaternion> {
    if delta_raw.iter().any(|v| !v.is_finite()) {
        return Err(Error::domain("non-finite rotation delta"));
    }
    let bin = bins.bin(class_id, bin_index)?;
    let [w, x, y, z] = delta_raw;
    match Quaternion::new(w, x, y, z).normalize() {
        Ok(delta) => bin.mul(delta).normalize(),
        Err(_) => {
            log::warn!("zero rotation delta for class {class_id}, using bin {bin_index}");
            Ok(bin)
        }
    }
}

fn check_box(b: &BBox) -> Result<()> {
    if !(b.width() > 0.0) || !(b.height() > 0.0) {
        return Err(Error::domain("degenerate box in centre codec"));
    }
    Ok(())
}

/// Offset of the true centre from the box centre, in box widths/heights.
pub fn encode_center(b: &BBox, true_center_px: [f64; 2]) -> Result<[f64; 2]> {
    check_box(b)?;
    let [cx, cy] = b.center();
    Ok([
        (true_center_px[0] - cx) / b.width(),
        (true_center_px[1] - cy) / b.height(),
    ])
}

pub fn decode_center(b: &BBox, deltas: [f64; 2]) -> Result<[f64; 2]> {
    check_box(b)?;
    let [cx, cy] = b.center();
    Ok([cx + deltas[0] * b.width(), cy + deltas[1] * b.height()])
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::quat::geodesic_unchecked;
    use std::collections::BTreeMap;
    use std::f64::consts::PI;

    fn bins() -> RotationBins {
        let qs = vec![
            Quaternion::IDENTITY,
            Quaternion::from_axis_angle([0.0, 1.0, 0.0], 0.8).unwrap(),
            Quaternion::from_axis_angle([1.0, 0.0, 0.0], -0.5).unwrap(),
        ];
        RotationBins::from_map(BTreeMap::from([(0, qs)])).unwrap()
    }

    #[test]
    fn truth_equal_to_bin() {
        let b = bins();
        let t = encode_rotation(b.bin(0, 1).unwrap(), &b, 0, PI / 6.0).unwrap();
        assert_eq!(t.bin_index, 1);
        assert!(t.regress_mask);
        assert!(geodesic_unchecked(t.delta, Quaternion::IDENTITY) < 1e-12);
    }

    #[test]
    fn far_truth_fails_gate() {
        let single = RotationBins::from_map(BTreeMap::from([(0, vec![Quaternion::IDENTITY])])).unwrap();
        let flip = Quaternion::new(0.0, 0.0, 0.0, 1.0);
        let t = encode_rotation(flip, &single, 0, PI / 6.0).unwrap();
        assert!(!t.regress_mask);
    }

    #[test]
    fn bias_init_and_zero_delta_decode_to_bin() {
        let b = bins();
        let bin = b.bin(0, 2).unwrap();
        let q = decode_rotation(2, [0.95, 0.0, 0.0, 0.0], &b, 0).unwrap();
        assert!(geodesic_unchecked(q, bin) < 1e-15);
        assert_eq!(decode_rotation(2, [0.0; 4], &b, 0).unwrap(), bin);
        assert!(decode_rotation(2, [f64::NAN, 0.0, 0.0, 0.0], &b, 0).is_err());
        assert!(decode_rotation(7, [1.0, 0.0, 0.0, 0.0], &b, 0).is_err());
    }

    #[test]
    fn center_codec() {
        let b = BBox::new(10.0, 20.0, 30.0, 60.0).unwrap();
        assert_eq!(encode_center(&b, [20.0, 40.0]).unwrap(), [0.0, 0.0]);
        assert_eq!(encode_center(&b, [30.0, 40.0]).unwrap(), [0.5, 0.0]);
        let p = [13.7, 55.1];
        let back = decode_center(&b, encode_center(&b, p).unwrap()).unwrap();
        assert!((back[0] - p[0]).abs() < 1e-12 && (back[1] - p[1]).abs() < 1e-12);
    }
}
