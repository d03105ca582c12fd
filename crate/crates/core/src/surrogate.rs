//! Surrogate images for knockout tests and sweeps: masked fills and ROI
//! translations.

use serde::{Deserialize, Serialize};

use crate::error::{invalid, Result};
use crate::image::Image;
use crate::scalar::Real;

/// Rectangular region of interest, top-left corner plus size.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Roi {
    pub row: usize,
    pub col: usize,
    pub height: usize,
    pub width: usize,
}

impl Roi {
    pub fn new(row: usize, col: usize, height: usize, width: usize) -> Self {
        Self { row, col, height, width }
    }

    pub fn check_within(&self, h: usize, w: usize) -> Result<()> {
        if self.height == 0 || self.width == 0 || self.row + self.height > h || self.col + self.width > w {
            return invalid(format!("ROI {:?} does not fit a {}x{} image", self, h, w));
        }
        Ok(())
    }

    pub fn contains(&self, r: usize, c: usize) -> bool {
        r >= self.row && r < self.row + self.height && c >= self.col && c < self.col + self.width
    }

    pub fn mask(&self, h: usize, w: usize) -> Result<Vec<bool>> {
        self.check_within(h, w)?;
        Ok((0..h * w).map(|i| self.contains(i / w, i % w)).collect())
    }
}

/// Pixels whose centres lie within `radius` of `(cy, cx)`.
pub fn disk_mask(h: usize, w: usize, cy: f64, cx: f64, radius: f64) -> Vec<bool> {
    (0..h * w)
        .map(|i| {
            let (r, c) = ((i / w) as f64, (i % w) as f64);
            (r - cy).hypot(c - cx) <= radius
        })
        .collect()
}

fn check_mask<T: Real>(img: &Image<T>, mask: &[bool]) -> Result<()> {
    if mask.len() != img.len() {
        return invalid(format!("mask has {} entries, image has {}", mask.len(), img.len()));
    }
    if !mask.iter().any(|&m| m) {
        return invalid("mask selects no pixels");
    }
    Ok(())
}

/// Median of the pixels within `ring` steps (8-neighbourhood) of the mask
/// but outside it.
pub fn surrounding_value<T: Real>(img: &Image<T>, mask: &[bool], ring: usize) -> Result<T> {
    check_mask(img, mask)?;
    let (h, w) = img.shape();
    let ring = ring.max(1) as isize;
    let mut vals = Vec::new();
    for r in 0..h {
        for c in 0..w {
            if mask[r * w + c] {
                continue;
            }
            let near = (-ring..=ring).any(|dr| {
                (-ring..=ring).any(|dc| {
                    let (rr, cc) = (r as isize + dr, c as isize + dc);
                    rr >= 0 && cc >= 0 && (rr as usize) < h && (cc as usize) < w && mask[rr as usize * w + cc as usize]
                })
            });
            if near {
                vals.push(img.get(r, c));
            }
        }
    }
    if vals.is_empty() {
        return invalid("mask covers the whole image; no surrounding pixels");
    }
    vals.sort_by(|a, b| a.partial_cmp(b).expect("finite pixels"));
    let m = vals.len();
    Ok(if m % 2 == 1 { vals[m / 2] } else { (vals[m / 2 - 1] + vals[m / 2]) * T::lit(0.5) })
}

pub fn fill_region<T: Real>(img: &Image<T>, mask: &[bool], value: T) -> Result<Image<T>> {
    check_mask(img, mask)?;
    let mut out = img.clone();
    for (v, &m) in out.data_mut().iter_mut().zip(mask) {
        if m {
            *v = value;
        }
    }
    Ok(out)
}

/// Replaces the masked pixels with the level of their surroundings.
pub fn inpaint_region<T: Real>(img: &Image<T>, mask: &[bool], ring: usize) -> Result<Image<T>> {
    let v = surrounding_value(img, mask, ring)?;
    fill_region(img, mask, v)
}

/// Adds `delta` to the masked pixels.
pub fn offset_region<T: Real>(img: &Image<T>, mask: &[bool], delta: T) -> Result<Image<T>> {
    check_mask(img, mask)?;
    let mut out = img.clone();
    for (v, &m) in out.data_mut().iter_mut().zip(mask) {
        if m {
            *v += delta;
        }
    }
    Ok(out)
}

/// Moves the content of `roi` (relative to `background`) by `(dy, dx)`
/// pixels with bilinear interpolation. Content shifted past the image border
/// is lost.
pub fn translate_roi<T: Real>(img: &Image<T>, roi: Roi, dy: f64, dx: f64, background: T) -> Result<Image<T>> {
    let (h, w) = img.shape();
    roi.check_within(h, w)?;
    if !dy.is_finite() || !dx.is_finite() {
        return invalid("shift must be finite");
    }
    let content = |r: isize, c: isize| -> T {
        if r < 0 || c < 0 || !roi.contains(r as usize, c as usize) {
            T::zero()
        } else {
            img.get(r as usize, c as usize) - background
        }
    };
    let mut out = img.clone();
    for r in roi.row..roi.row + roi.height {
        for c in roi.col..roi.col + roi.width {
            out.set(r, c, background);
        }
    }
    let (fy, fx) = (dy.floor(), dx.floor());
    let (wy, wx) = (T::lit(dy - fy), T::lit(dx - fx));
    let r_lo = (roi.row as f64 + fy).max(0.0) as usize;
    let r_hi = ((roi.row + roi.height) as f64 + fy + 1.0).clamp(0.0, h as f64) as usize;
    let c_lo = (roi.col as f64 + fx).max(0.0) as usize;
    let c_hi = ((roi.col + roi.width) as f64 + fx + 1.0).clamp(0.0, w as f64) as usize;
    for r in r_lo..r_hi {
        for c in c_lo..c_hi {
            // source position (r - dy, c - dx)
            let sr = r as isize - fy as isize;
            let sc = c as isize - fx as isize;
            let one = T::one();
            let v = (one - wy) * (one - wx) * content(sr, sc)
                + (one - wy) * wx * content(sr, sc - 1)
                + wy * (one - wx) * content(sr - 1, sc)
                + wy * wx * content(sr - 1, sc - 1);
            if v != T::zero() {
                let cur = out.get(r, c);
                out.set(r, c, cur + v);
            }
        }
    }
    Ok(out)
}
