//! Grayscale images, binary masks and binary PGM (P5) I/O.

use std::io::Write;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Row-major grayscale image with intensities in `[0, 1]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GrayImage {
    pub width: usize,
    pub height: usize,
    pub data: Vec<f64>,
}

impl GrayImage {
    pub fn new(width: usize, height: usize) -> Self {
        Self {
            width,
            height,
            data: vec![0.0; width * height],
        }
    }

    #[inline]
    pub fn get(&self, x: usize, y: usize) -> f64 {
        self.data[y * self.width + x]
    }

    #[inline]
    pub fn set(&mut self, x: usize, y: usize, v: f64) {
        self.data[y * self.width + x] = v;
    }

    /// Bilinear lookup at continuous coordinates where pixel `(i, j)` has its
    /// centre at `(i + 0.5, j + 0.5)`; zero outside the image.
    pub fn sample(&self, x: f64, y: f64) -> f64 {
        bilinear(self.width, self.height, x, y, |i, j| self.get(i, j))
    }

    pub fn flipped_x(&self) -> GrayImage {
        let mut out = GrayImage::new(self.width, self.height);
        for y in 0..self.height {
            for x in 0..self.width {
                out.set(self.width - 1 - x, y, self.get(x, y));
            }
        }
        out
    }

    /// Encodes as 8-bit binary PGM (P5).
    pub fn to_pgm(&self) -> Vec<u8> {
        let mut out = format!("P5\n{} {}\n255\n", self.width, self.height).into_bytes();
        out.extend(
            self.data
                .iter()
                .map(|&v| (v.clamp(0.0, 1.0) * 255.0).round() as u8),
        );
        out
    }

    pub fn from_pgm(bytes: &[u8]) -> Result<Self> {
        let mut pos = 0;
        let mut tokens = Vec::with_capacity(4);
        while tokens.len() < 4 {
            while pos < bytes.len() && bytes[pos].is_ascii_whitespace() {
                pos += 1;
            }
            if pos < bytes.len() && bytes[pos] == b'#' {
                while pos < bytes.len() && bytes[pos] != b'\n' {
                    pos += 1;
                }
                continue;
            }
            let start = pos;
            while pos < bytes.len() && !bytes[pos].is_ascii_whitespace() {
                pos += 1;
            }
            if start == pos {
                return Err(Error::Format("truncated PGM header".into()));
            }
            tokens.push(String::from_utf8_lossy(&bytes[start..pos]).into_owned());
        }
        pos += 1;
        if tokens[0] != "P5" {
            return Err(Error::Format(format!("expected P5 magic, got {}", tokens[0])));
        }
        let parse = |t: &str| {
            t.parse::<usize>()
                .map_err(|_| Error::Format(format!("bad PGM header field `{t}`")))
        };
        let (width, height, maxval) = (parse(&tokens[1])?, parse(&tokens[2])?, parse(&tokens[3])?);
        if maxval == 0 || maxval > 255 {
            return Err(Error::Format(format!("unsupported PGM maxval {maxval}")));
        }
        let body = bytes
            .get(pos..pos + width * height)
            .ok_or_else(|| Error::Format("truncated PGM pixel data".into()))?;
        Ok(Self {
            width,
            height,
            data: body.iter().map(|&b| b as f64 / maxval as f64).collect(),
        })
    }

    pub fn save_pgm(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let mut f = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
        f.write_all(&self.to_pgm()).map_err(|e| Error::io(path, e))
    }

    pub fn load_pgm(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        Self::from_pgm(&std::fs::read(path).map_err(|e| Error::io(path, e))?)
    }
}

/// Row-major binary mask.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct BitMask {
    pub width: usize,
    pub height: usize,
    pub data: Vec<bool>,
}

impl BitMask {
    pub fn new(width: usize, height: usize) -> Self {
        Self {
            width,
            height,
            data: vec![false; width * height],
        }
    }

    pub fn filled(width: usize, height: usize, value: bool) -> Self {
        Self {
            width,
            height,
            data: vec![value; width * height],
        }
    }

    #[inline]
    pub fn get(&self, x: usize, y: usize) -> bool {
        self.data[y * self.width + x]
    }

    #[inline]
    pub fn set(&mut self, x: usize, y: usize, v: bool) {
        self.data[y * self.width + x] = v;
    }

    pub fn count(&self) -> usize {
        self.data.iter().filter(|&&b| b).count()
    }

    pub fn sample(&self, x: f64, y: f64) -> f64 {
        bilinear(self.width, self.height, x, y, |i, j| {
            if self.get(i, j) {
                1.0
            } else {
                0.0
            }
        })
    }

    /// Run-length encoding as alternating counts starting with `false`.
    pub fn to_rle(&self) -> Vec<usize> {
        let mut runs = Vec::new();
        let mut current = false;
        let mut count = 0;
        for &b in &self.data {
            if b == current {
                count += 1;
            } else {
                runs.push(count);
                current = b;
                count = 1;
            }
        }
        runs.push(count);
        runs
    }

    pub fn from_rle(width: usize, height: usize, runs: &[usize]) -> Result<Self> {
        let mut data = Vec::with_capacity(width * height);
        let mut value = false;
        for &r in runs {
            data.extend(std::iter::repeat_n(value, r));
            value = !value;
        }
        if data.len() != width * height {
            return Err(Error::Format(format!(
                "mask runs cover {} pixels, expected {}",
                data.len(),
                width * height
            )));
        }
        Ok(Self {
            width,
            height,
            data,
        })
    }
}

fn bilinear(w: usize, h: usize, x: f64, y: f64, at: impl Fn(usize, usize) -> f64) -> f64 {
    let fx = x - 0.5;
    let fy = y - 0.5;
    let x0 = fx.floor();
    let y0 = fy.floor();
    let tx = fx - x0;
    let ty = fy - y0;
    let fetch = |i: f64, j: f64| {
        if i < 0.0 || j < 0.0 || i >= w as f64 || j >= h as f64 {
            0.0
        } else {
            at(i as usize, j as usize)
        }
    };
    let a = fetch(x0, y0);
    let b = fetch(x0 + 1.0, y0);
    let c = fetch(x0, y0 + 1.0);
    let d = fetch(x0 + 1.0, y0 + 1.0);
    (a * (1.0 - tx) + b * tx) * (1.0 - ty) + (c * (1.0 - tx) + d * tx) * ty
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn pgm_round_trip_is_exact_on_8bit_values() {
        let mut img = GrayImage::new(5, 3);
        for (i, v) in img.data.iter_mut().enumerate() {
            *v = (i * 17 % 256) as f64 / 255.0;
        }
        let back = GrayImage::from_pgm(&img.to_pgm()).unwrap();
        assert_eq!(back.width, 5);
        for (a, b) in img.data.iter().zip(&back.data) {
            assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn pgm_rejects_other_magic() {
        assert!(GrayImage::from_pgm(b"P2\n1 1\n255\n0").is_err());
    }

    #[test]
    fn rle_round_trip() {
        let mut m = BitMask::new(4, 3);
        m.set(0, 0, true);
        m.set(3, 1, true);
        m.set(0, 2, true);
        assert_eq!(BitMask::from_rle(4, 3, &m.to_rle()).unwrap(), m);
        assert!(BitMask::from_rle(4, 3, &[3]).is_err());
    }

    #[test]
    fn bilinear_hits_pixel_centres() {
        let mut img = GrayImage::new(2, 2);
        img.set(1, 0, 1.0);
        assert_eq!(img.sample(1.5, 0.5), 1.0);
        assert_eq!(img.sample(1.0, 0.5), 0.5);
    }
}
