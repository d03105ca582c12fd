//! Point-spread functions and periodic convolution.

use num_complex::Complex;

use super::fft::Fft2;
use crate::error::{invalid, Result};
use crate::image::Image;
use crate::scalar::Real;

#[derive(Debug, Clone, PartialEq)]
pub struct PointSpreadFunction<T> {
    kernel: Image<T>,
    normalized: bool,
}

impl<T: Real> PointSpreadFunction<T> {
    /// Wraps raw taps; with `normalize` the taps are rescaled to sum to one.
    pub fn new(kernel: Image<T>, normalize: bool) -> Result<Self> {
        if !normalize {
            return Ok(Self { kernel, normalized: false });
        }
        let total = kernel.sum();
        if total.abs() <= T::epsilon() {
            return invalid("cannot normalize a PSF whose taps sum to zero");
        }
        Ok(Self { kernel: kernel.scaled(T::one() / total), normalized: true })
    }

    /// Single unit tap: the identity blur.
    pub fn identity() -> Self {
        Self { kernel: Image::filled(1, 1, T::one()), normalized: true }
    }

    /// Isotropic Gaussian with standard deviation `width` pixels on a
    /// `size × size` support.
    pub fn gaussian(size: usize, width: f64) -> Result<Self> {
        if size == 0 || !(width > 0.0) {
            return invalid("gaussian PSF needs positive support and width");
        }
        let c = (size as f64 - 1.0) / 2.0;
        let k = Image::from_fn(size, size, |r, col| {
            let (dy, dx) = (r as f64 - c, col as f64 - c);
            T::lit((-(dx * dx + dy * dy) / (2.0 * width * width)).exp())
        });
        Self::new(k, true)
    }

    /// Airy-like pattern `(2 J₁(v)/v)²` whose first dark ring sits at
    /// radius `width` pixels.
    pub fn airy_like(size: usize, width: f64) -> Result<Self> {
        if size == 0 || !(width > 0.0) {
            return invalid("airy-like PSF needs positive support and width");
        }
        const FIRST_ZERO: f64 = 3.831_705_970_207_512;
        let c = (size as f64 - 1.0) / 2.0;
        let k = Image::from_fn(size, size, |r, col| {
            let rad = (r as f64 - c).hypot(col as f64 - c);
            let v = FIRST_ZERO * rad / width;
            let a = if v < 1e-8 { 1.0 } else { 2.0 * bessel_j1(v) / v };
            T::lit(a * a)
        });
        Self::new(k, true)
    }

    pub fn kernel(&self) -> &Image<T> {
        &self.kernel
    }

    pub fn normalized(&self) -> bool {
        self.normalized
    }

    /// Taps with both axes reversed; the adjoint blur.
    pub fn flipped(&self) -> Self {
        let (h, w) = self.kernel.shape();
        let k = Image::from_fn(h, w, |r, c| self.kernel.get(h - 1 - r, w - 1 - c));
        Self { kernel: k, normalized: self.normalized }
    }
}

/// J₁ via Bessel's integral `(1/π)∫₀^π cos(τ − x sin τ) dτ` (composite Simpson).
fn bessel_j1(x: f64) -> f64 {
    let m = 256;
    let h = std::f64::consts::PI / m as f64;
    let f = |t: f64| (t - x * t.sin()).cos();
    let mut s = f(0.0) + f(std::f64::consts::PI);
    for i in 1..m {
        let w = if i % 2 == 1 { 4.0 } else { 2.0 };
        s += w * f(i as f64 * h);
    }
    s * h / 3.0 / std::f64::consts::PI
}

/// Circular convolution with a fixed PSF on a fixed image shape.
#[derive(Debug, Clone)]
pub struct Convolution<T: Real> {
    fft: Fft2<T>,
    /// Transfer function (unnormalized DFT of the centred, wrapped kernel).
    spectrum: Vec<Complex<T>>,
}

impl<T: Real> Convolution<T> {
    pub fn new(psf: &PointSpreadFunction<T>, height: usize, width: usize) -> Result<Self> {
        let (kh, kw) = psf.kernel().shape();
        if kh > height || kw > width {
            return invalid(format!(
                "PSF {kh}x{kw} does not fit in a {height}x{width} image"
            ));
        }
        let fft = Fft2::new(height, width);
        let mut buf = vec![Complex::new(T::zero(), T::zero()); height * width];
        let (ch, cw) = (kh / 2, kw / 2);
        for r in 0..kh {
            for c in 0..kw {
                let rr = (r + height - ch) % height;
                let cc = (c + width - cw) % width;
                buf[rr * width + cc] += Complex::new(psf.kernel().get(r, c), T::zero());
            }
        }
        fft.forward_inplace(&mut buf);
        let root_n = T::from_usize_lossy(height * width).sqrt();
        for v in buf.iter_mut() {
            *v = *v * root_n;
        }
        Ok(Self { fft, spectrum: buf })
    }

    pub fn shape(&self) -> (usize, usize) {
        self.fft.shape()
    }

    pub fn fft(&self) -> &Fft2<T> {
        &self.fft
    }

    pub fn transfer_function(&self) -> &[Complex<T>] {
        &self.spectrum
    }

    /// `|K̂|²`, the Fourier diagonal of `HᵀH`.
    pub fn normal_diagonal(&self) -> Vec<T> {
        self.spectrum.iter().map(|c| c.norm_sqr()).collect()
    }

    fn filter(&self, img: &Image<T>, conj: bool) -> Result<Image<T>> {
        let (h, w) = self.shape();
        img.check_shape(h, w, "convolve")?;
        let mut buf = vec![Complex::new(T::zero(), T::zero()); h * w];
        self.fft.forward_real_into(img.data(), &mut buf);
        for (v, k) in buf.iter_mut().zip(&self.spectrum) {
            *v = *v * if conj { k.conj() } else { *k };
        }
        let mut out = vec![T::zero(); h * w];
        self.fft.inverse_real_into(&mut buf, &mut out);
        Ok(Image::from_vec_unchecked(h, w, out))
    }

    pub fn apply(&self, img: &Image<T>) -> Result<Image<T>> {
        self.filter(img, false)
    }

    /// Correlation with the kernel, i.e. convolution with the flipped PSF.
    pub fn adjoint(&self, img: &Image<T>) -> Result<Image<T>> {
        self.filter(img, true)
    }
}

/// Circular convolution of `img` with `psf` computed in the frequency domain.
pub fn convolve<T: Real>(img: &Image<T>, psf: &PointSpreadFunction<T>) -> Result<Image<T>> {
    Convolution::new(psf, img.height(), img.width())?.apply(img)
}
