use crate::error::{Error, Result};
use crate::geometry::BBox;
use crate::image::BitMask;

pub fn box_iou(a: &BBox, b: &BBox) -> f64 {
    let inter = a.intersection_area(b);
    inter / (a.area() + b.area() - inter)
}

pub fn mask_iou(a: &BitMask, b: &BitMask) -> Result<f64> {
    if a.width != b.width || a.height != b.height {
        return Err(Error::domain(format!(
            "mask sizes differ: {}x{} vs {}x{}",
            a.width, a.height, b.width, b.height
        )));
    }
    let (mut inter, mut union) = (0usize, 0usize);
    for (&x, &y) in a.data.iter().zip(&b.data) {
        inter += (x && y) as usize;
        union += (x || y) as usize;
    }
    Ok(if union == 0 { 0.0 } else { inter as f64 / union as f64 })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn box_cases() {
        let a = BBox::new(0.0, 0.0, 1.0, 1.0).unwrap();
        assert_eq!(box_iou(&a, &a), 1.0);
        let far = BBox::new(2.0, 2.0, 3.0, 3.0).unwrap();
        assert_eq!(box_iou(&a, &far), 0.0);
        let half = BBox::new(0.5, 0.0, 1.5, 1.0).unwrap();
        assert!((box_iou(&a, &half) - 1.0 / 3.0).abs() < 1e-15);
        assert!(BBox::new(1.0, 0.0, 0.0, 1.0).is_err());
    }

    #[test]
    fn mask_cases() {
        let mut a = BitMask::new(4, 2);
        let mut b = BitMask::new(4, 2);
        for y in 0..2 {
            for x in 0..2 {
                a.set(x, y, true);
                b.set(x + 1, y, true);
            }
        }
        assert_eq!(mask_iou(&a, &a).unwrap(), 1.0);
        assert!((mask_iou(&a, &b).unwrap() - 1.0 / 3.0).abs() < 1e-15);
        assert!(mask_iou(&a, &BitMask::new(2, 2)).is_err());
    }
}
