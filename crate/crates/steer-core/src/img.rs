//! Dense image and mask value types.

use crate::error::{Error, Result};

/// An RGB image with float channels in `[0, 1]`, row-major `(y, x, c)`.
#[derive(Debug, Clone, PartialEq)]
pub struct Image {
    pub h: usize,
    pub w: usize,
    pub data: Vec<f64>,
}

impl Image {
    pub fn new(h: usize, w: usize) -> Self {
        Image { h, w, data: vec![0.0; h * w * 3] }
    }

    pub fn from_data(h: usize, w: usize, data: Vec<f64>) -> Result<Self> {
        if data.len() != h * w * 3 {
            return Err(Error::contract(format!(
                "image data length {} does not match {}x{}x3",
                data.len(),
                h,
                w
            )));
        }
        Ok(Image { h, w, data })
    }

    #[inline]
    pub fn idx(&self, y: usize, x: usize) -> usize {
        (y * self.w + x) * 3
    }

    #[inline]
    pub fn get(&self, y: usize, x: usize) -> [f64; 3] {
        let i = self.idx(y, x);
        [self.data[i], self.data[i + 1], self.data[i + 2]]
    }

    #[inline]
    pub fn set(&mut self, y: usize, x: usize, rgb: [f64; 3]) {
        let i = self.idx(y, x);
        self.data[i] = rgb[0];
        self.data[i + 1] = rgb[1];
        self.data[i + 2] = rgb[2];
    }

    /// 2x box downscale, averaging each 2x2 block.
    pub fn downscale2(&self) -> Image {
        let (h, w) = (self.h / 2, self.w / 2);
        let mut out = Image::new(h, w);
        for y in 0..h {
            for x in 0..w {
                let mut acc = [0.0; 3];
                for dy in 0..2 {
                    for dx in 0..2 {
                        let p = self.get(2 * y + dy, 2 * x + dx);
                        for c in 0..3 {
                            acc[c] += p[c];
                        }
                    }
                }
                out.set(y, x, [acc[0] / 4.0, acc[1] / 4.0, acc[2] / 4.0]);
            }
        }
        out
    }
}

/// A binary mask aligned with an image.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Mask {
    pub h: usize,
    pub w: usize,
    pub bits: Vec<bool>,
}

impl Mask {
    pub fn new(h: usize, w: usize) -> Self {
        Mask { h, w, bits: vec![false; h * w] }
    }

    #[inline]
    pub fn get(&self, y: usize, x: usize) -> bool {
        self.bits[y * self.w + x]
    }

    #[inline]
    pub fn set(&mut self, y: usize, x: usize, v: bool) {
        self.bits[y * self.w + x] = v;
    }

    pub fn count(&self) -> usize {
        self.bits.iter().filter(|b| **b).count()
    }

    pub fn union(&self, other: &Mask) -> Mask {
        assert_eq!((self.h, self.w), (other.h, other.w));
        let bits = self
            .bits
            .iter()
            .zip(&other.bits)
            .map(|(a, b)| *a || *b)
            .collect();
        Mask { h: self.h, w: self.w, bits }
    }

    /// Run-length encoding in row-major scan order: alternating run lengths
    /// starting with the number of leading `false` pixels.
    pub fn rle(&self) -> Vec<u32> {
        let mut runs = Vec::new();
        let mut cur = false;
        let mut len: u32 = 0;
        for &b in &self.bits {
            if b == cur {
                len += 1;
            } else {
                runs.push(len);
                cur = b;
                len = 1;
            }
        }
        runs.push(len);
        runs
    }
}

/// Bilinearly upsample a `gh x gw` grid of values to `h x w` pixels.
///
/// Grid values are treated as samples at cell centers; target pixel centers
/// are mapped into grid coordinates and clamped at the border.
pub fn bilinear_upsample(grid: &[f64], gh: usize, gw: usize, h: usize, w: usize) -> Vec<f64> {
    assert_eq!(grid.len(), gh * gw);
    let mut out = vec![0.0; h * w];
    for y in 0..h {
        let gy = ((y as f64 + 0.5) / h as f64) * gh as f64 - 0.5;
        let gy = gy.clamp(0.0, (gh - 1) as f64);
        let y0 = gy.floor() as usize;
        let y1 = (y0 + 1).min(gh - 1);
        let fy = gy - y0 as f64;
        for x in 0..w {
            let gx = ((x as f64 + 0.5) / w as f64) * gw as f64 - 0.5;
            let gx = gx.clamp(0.0, (gw - 1) as f64);
            let x0 = gx.floor() as usize;
            let x1 = (x0 + 1).min(gw - 1);
            let fx = gx - x0 as f64;
            let v00 = grid[y0 * gw + x0];
            let v01 = grid[y0 * gw + x1];
            let v10 = grid[y1 * gw + x0];
            let v11 = grid[y1 * gw + x1];
            out[y * w + x] = v00 * (1.0 - fy) * (1.0 - fx)
                + v01 * (1.0 - fy) * fx
                + v10 * fy * (1.0 - fx)
                + v11 * fy * fx;
        }
    }
    out
}
