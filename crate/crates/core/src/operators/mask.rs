//! Fourier-domain sampling masks for the tomography forward model.

use num_complex::Complex;
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::fft::{mirror_index, signed_frequency, Fft2};
use crate::error::{invalid, Result};
use crate::image::{ComplexGrid, Image};
use crate::scalar::Real;

/// Boolean keep-pattern over the unshifted FFT grid (DC at index 0).
#[derive(Debug, Clone, PartialEq)]
pub struct SamplingMask {
    height: usize,
    width: usize,
    keep: Vec<bool>,
    fraction: f64,
}

impl SamplingMask {
    /// Wraps an explicit pattern. The DC bin must be kept.
    pub fn from_keep(height: usize, width: usize, keep: Vec<bool>) -> Result<Self> {
        if height == 0 || width == 0 || keep.len() != height * width {
            return invalid(format!(
                "mask pattern has {} entries for a {height}x{width} grid",
                keep.len()
            ));
        }
        if !keep[0] {
            return invalid("sampling mask must keep the zero-frequency coefficient");
        }
        let count = keep.iter().filter(|&&k| k).count();
        Ok(Self { height, width, fraction: count as f64 / keep.len() as f64, keep })
    }

    pub fn full(height: usize, width: usize) -> Self {
        Self::from_keep(height, width, vec![true; height * width]).expect("valid full mask")
    }

    /// Keeps the zero-frequency coefficient only.
    pub fn dc_only(height: usize, width: usize) -> Self {
        let mut keep = vec![false; height * width];
        keep[0] = true;
        Self::from_keep(height, width, keep).expect("valid DC mask")
    }

    /// Pseudo-tomographic mask: `lines` straight lines through the DC bin at
    /// evenly spaced angles, with a seeded rotation of the whole fan.
    pub fn radial(height: usize, width: usize, lines: usize, seed: u64) -> Result<Self> {
        if height == 0 || width == 0 {
            return invalid("mask dimensions must be positive");
        }
        if lines == 0 {
            return invalid("radial mask needs at least one line");
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let offset: f64 = rng.random_range(0.0..std::f64::consts::PI / lines as f64);
        let mut keep = vec![false; height * width];
        keep[0] = true;
        let (hh, hw) = (height as f64 / 2.0, width as f64 / 2.0);
        for l in 0..lines {
            let theta = offset + std::f64::consts::PI * l as f64 / lines as f64;
            let (s, c) = theta.sin_cos();
            // one sample per unit step along the dominant axis
            let (major, half) = if s.abs() > c.abs() { (s.abs(), hh) } else { (c.abs(), hw) };
            let steps = half.ceil() as i64;
            for k in -steps..=steps {
                let t = k as f64 / major;
                let (fy, fx) = ((t * s).round(), (t * c).round());
                if fy < -hh || fy >= hh || fx < -hw || fx >= hw {
                    continue;
                }
                let r = (fy as isize).rem_euclid(height as isize) as usize;
                let cidx = (fx as isize).rem_euclid(width as isize) as usize;
                keep[r * width + cidx] = true;
                keep[mirror_index(r, height) * width + mirror_index(cidx, width)] = true;
            }
        }
        Self::from_keep(height, width, keep)
    }

    /// Uniform random mask keeping roughly `fraction` of the coefficients,
    /// closed under `k ↦ -k` so the normal operator stays real.
    pub fn uniform(height: usize, width: usize, fraction: f64, seed: u64) -> Result<Self> {
        if height == 0 || width == 0 {
            return invalid("mask dimensions must be positive");
        }
        if !(fraction > 0.0 && fraction <= 1.0) {
            return invalid(format!("mask fraction must lie in (0, 1], got {fraction}"));
        }
        let n = height * width;
        let target = ((fraction * n as f64).round() as usize).max(1);
        // one representative per conjugate pair, DC excluded
        let mut reps: Vec<usize> = (1..n)
            .filter(|&i| {
                let (r, c) = (i / width, i % width);
                let j = mirror_index(r, height) * width + mirror_index(c, width);
                i <= j
            })
            .collect();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        reps.shuffle(&mut rng);
        let mut keep = vec![false; n];
        keep[0] = true;
        let mut count = 1;
        for i in reps {
            if count >= target {
                break;
            }
            let (r, c) = (i / width, i % width);
            let j = mirror_index(r, height) * width + mirror_index(c, width);
            keep[i] = true;
            keep[j] = true;
            count += if i == j { 1 } else { 2 };
        }
        Self::from_keep(height, width, keep)
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn shape(&self) -> (usize, usize) {
        (self.height, self.width)
    }

    pub fn keep(&self) -> &[bool] {
        &self.keep
    }

    pub fn fraction(&self) -> f64 {
        self.fraction
    }

    pub fn kept_count(&self) -> usize {
        self.keep.iter().filter(|&&k| k).count()
    }

    /// True when the pattern is closed under `k ↦ -k`.
    pub fn is_conjugate_symmetric(&self) -> bool {
        (0..self.height).all(|r| {
            (0..self.width).all(|c| {
                self.keep[r * self.width + c]
                    == self.keep[mirror_index(r, self.height) * self.width + mirror_index(c, self.width)]
            })
        })
    }

    /// Diagonal of `Re(FᴴMF)` in the Fourier domain: `(M(k) + M(-k)) / 2`.
    pub fn normal_diagonal<T: Real>(&self) -> Vec<T> {
        let half = T::lit(0.5);
        (0..self.height * self.width)
            .map(|i| {
                let (r, c) = (i / self.width, i % self.width);
                let j = mirror_index(r, self.height) * self.width + mirror_index(c, self.width);
                let a = if self.keep[i] { T::one() } else { T::zero() };
                let b = if self.keep[j] { T::one() } else { T::zero() };
                half * (a + b)
            })
            .collect()
    }

    /// Signed `(fy, fx)` frequency of bin `i`.
    pub fn frequency_of(&self, i: usize) -> (isize, isize) {
        (
            signed_frequency(i / self.width, self.height),
            signed_frequency(i % self.width, self.width),
        )
    }
}

/// Masked unitary DFT `x ↦ H F x` with its real-space adjoint.
#[derive(Debug, Clone)]
pub struct FourierSampling<T: Real> {
    fft: Fft2<T>,
    mask: SamplingMask,
}

impl<T: Real> FourierSampling<T> {
    pub fn new(mask: SamplingMask) -> Self {
        Self { fft: Fft2::new(mask.height(), mask.width()), mask }
    }

    pub fn mask(&self) -> &SamplingMask {
        &self.mask
    }

    pub fn fft(&self) -> &Fft2<T> {
        &self.fft
    }

    pub fn apply(&self, img: &Image<T>) -> Result<ComplexGrid<T>> {
        img.check_shape(self.mask.height(), self.mask.width(), "fourier_subsample")?;
        let mut freq = self.fft.forward(img)?.into_data();
        for (v, &k) in freq.iter_mut().zip(self.mask.keep()) {
            if !k {
                *v = Complex::new(T::zero(), T::zero());
            }
        }
        Ok(ComplexGrid::from_vec_unchecked(img.height(), img.width(), freq))
    }

    /// `Re(Fᴴ M u)`: adjoint with respect to the real inner product on images.
    pub fn adjoint(&self, coeffs: &ComplexGrid<T>) -> Result<Image<T>> {
        if coeffs.shape() != self.mask.shape() {
            return invalid("coefficient grid does not match the sampling mask");
        }
        let mut buf: Vec<Complex<T>> = coeffs
            .data()
            .iter()
            .zip(self.mask.keep())
            .map(|(&v, &k)| if k { v } else { Complex::new(T::zero(), T::zero()) })
            .collect();
        let mut out = vec![T::zero(); buf.len()];
        self.fft.inverse_real_into(&mut buf, &mut out);
        Ok(Image::from_vec_unchecked(coeffs.height(), coeffs.width(), out))
    }
}

/// `H F x`: unitary DFT with unobserved coefficients set to zero.
pub fn fourier_subsample<T: Real>(img: &Image<T>, mask: &SamplingMask) -> Result<ComplexGrid<T>> {
    if img.shape() != mask.shape() {
        return invalid(format!(
            "mask {}x{} does not match image {}x{}",
            mask.height(),
            mask.width(),
            img.height(),
            img.width()
        ));
    }
    FourierSampling::new(mask.clone()).apply(img)
}
