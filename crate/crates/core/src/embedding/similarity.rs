use crate::error::{Error, Result};

pub fn l2_norm(x: &[f64]) -> f64 {
    x.iter().map(|v| v * v).sum::<f64>().sqrt()
}

pub fn dot(x: &[f64], y: &[f64]) -> f64 {
    x.iter().zip(y).map(|(a, b)| a * b).sum()
}

pub fn normalized(x: &[f64]) -> Result<Vec<f64>> {
    let n = l2_norm(x);
    if !(n > 0.0) || !n.is_finite() {
        return Err(Error::domain(format!("cannot normalise vector with norm {n}")));
    }
    Ok(x.iter().map(|v| v / n).collect())
}

/// `(1/tau) * <x/|x|, y/|y|>`, in `[-1/tau, 1/tau]`.
pub fn scaled_cosine(x: &[f64], y: &[f64], tau: f64) -> Result<f64> {
    if x.len() != y.len() {
        return Err(Error::domain(format!("dimension mismatch {} vs {}", x.len(), y.len())));
    }
    if !(tau > 0.0) {
        return Err(Error::domain("temperature must be positive"));
    }
    let (nx, ny) = (l2_norm(x), l2_norm(y));
    if !(nx > 0.0) || !(ny > 0.0) {
        return Err(Error::domain("scaled cosine of a zero vector"));
    }
    Ok(dot(x, y) / (nx * ny) / tau)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn cases() {
        let x = [0.3, -1.0, 2.0];
        assert!((scaled_cosine(&x, &x, 0.15).unwrap() - 1.0 / 0.15).abs() < 1e-12);
        assert_eq!(scaled_cosine(&[1.0, 0.0], &[0.0, 3.0], 0.15).unwrap(), 0.0);
        let y = [1.0, 0.5, -0.2];
        let x2: Vec<f64> = x.iter().map(|v| 2.0 * v).collect();
        assert!((scaled_cosine(&x2, &y, 0.15).unwrap() - scaled_cosine(&x, &y, 0.15).unwrap()).abs() < 1e-14);
        assert!(scaled_cosine(&[0.0, 0.0], &[1.0, 0.0], 0.15).is_err());
    }
}
