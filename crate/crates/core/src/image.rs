//! Pixel grids: real images, complex spectra and gradient fields.

use num_complex::Complex;

use crate::error::{invalid, Result};
use crate::scalar::{dist2, dot, norm2, Real};

/// Real-valued `height × width` image stored row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct Image<T> {
    height: usize,
    width: usize,
    data: Vec<T>,
}

impl<T: Real> Image<T> {
    pub fn new(height: usize, width: usize, data: Vec<T>) -> Result<Self> {
        if height == 0 || width == 0 {
            return invalid(format!("image dimensions must be positive, got {height}x{width}"));
        }
        if data.len() != height * width {
            return invalid(format!(
                "image data has {} entries, expected {}x{}",
                data.len(),
                height,
                width
            ));
        }
        if data.iter().any(|v| !v.is_finite()) {
            return invalid("image contains non-finite values");
        }
        Ok(Self { height, width, data })
    }

    /// Builds an image without the finiteness scan. Dimensions still checked.
    pub(crate) fn from_vec_unchecked(height: usize, width: usize, data: Vec<T>) -> Self {
        debug_assert_eq!(data.len(), height * width);
        Self { height, width, data }
    }

    pub fn zeros(height: usize, width: usize) -> Self {
        Self::filled(height, width, T::zero())
    }

    pub fn filled(height: usize, width: usize, value: T) -> Self {
        assert!(height > 0 && width > 0, "image dimensions must be positive");
        Self { height, width, data: vec![value; height * width] }
    }

    pub fn from_fn(height: usize, width: usize, mut f: impl FnMut(usize, usize) -> T) -> Self {
        assert!(height > 0 && width > 0, "image dimensions must be positive");
        let mut data = Vec::with_capacity(height * width);
        for r in 0..height {
            for c in 0..width {
                data.push(f(r, c));
            }
        }
        Self { height, width, data }
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

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn data(&self) -> &[T] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [T] {
        &mut self.data
    }

    pub fn into_data(self) -> Vec<T> {
        self.data
    }

    pub fn get(&self, row: usize, col: usize) -> T {
        self.data[row * self.width + col]
    }

    pub fn set(&mut self, row: usize, col: usize, value: T) {
        self.data[row * self.width + col] = value;
    }

    pub fn same_shape(&self, other: &Image<T>) -> bool {
        self.shape() == other.shape()
    }

    pub fn check_shape(&self, height: usize, width: usize, what: &str) -> Result<()> {
        if self.shape() != (height, width) {
            return invalid(format!(
                "{what}: expected {height}x{width}, got {}x{}",
                self.height, self.width
            ));
        }
        Ok(())
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }

    pub fn norm(&self) -> T {
        norm2(&self.data)
    }

    pub fn dot(&self, other: &Image<T>) -> T {
        dot(&self.data, &other.data)
    }

    pub fn distance(&self, other: &Image<T>) -> T {
        dist2(&self.data, &other.data)
    }

    pub fn sum(&self) -> T {
        self.data.iter().copied().sum()
    }

    pub fn mean(&self) -> T {
        self.sum() / T::from_usize_lossy(self.len())
    }

    pub fn min(&self) -> T {
        self.data.iter().copied().fold(T::infinity(), T::min)
    }

    pub fn max(&self) -> T {
        self.data.iter().copied().fold(T::neg_infinity(), T::max)
    }

    pub fn map(&self, f: impl Fn(T) -> T) -> Self {
        Self::from_vec_unchecked(self.height, self.width, self.data.iter().map(|&v| f(v)).collect())
    }

    /// `a·self + b·other`, elementwise.
    pub fn lin_comb(&self, a: T, other: &Image<T>, b: T) -> Self {
        debug_assert!(self.same_shape(other));
        let data = self.data.iter().zip(&other.data).map(|(&x, &y)| a * x + b * y).collect();
        Self::from_vec_unchecked(self.height, self.width, data)
    }

    pub fn scaled(&self, a: T) -> Self {
        self.map(|v| a * v)
    }

    /// Converts between scalar types (e.g. `f64` storage to `f32` compute).
    pub fn cast<U: Real>(&self) -> Image<U> {
        Image::from_vec_unchecked(
            self.height,
            self.width,
            self.data.iter().map(|v| U::lit(v.as_f64())).collect(),
        )
    }
}

/// Complex `height × width` grid; holds Fourier coefficients.
#[derive(Debug, Clone, PartialEq)]
pub struct ComplexGrid<T> {
    height: usize,
    width: usize,
    data: Vec<Complex<T>>,
}

impl<T: Real> ComplexGrid<T> {
    pub fn new(height: usize, width: usize, data: Vec<Complex<T>>) -> Result<Self> {
        if height == 0 || width == 0 {
            return invalid(format!("grid dimensions must be positive, got {height}x{width}"));
        }
        if data.len() != height * width {
            return invalid(format!(
                "grid data has {} entries, expected {}x{}",
                data.len(),
                height,
                width
            ));
        }
        if data.iter().any(|v| !v.re.is_finite() || !v.im.is_finite()) {
            return invalid("grid contains non-finite values");
        }
        Ok(Self { height, width, data })
    }

    pub(crate) fn from_vec_unchecked(height: usize, width: usize, data: Vec<Complex<T>>) -> Self {
        debug_assert_eq!(data.len(), height * width);
        Self { height, width, data }
    }

    pub fn zeros(height: usize, width: usize) -> Self {
        Self { height, width, data: vec![Complex::new(T::zero(), T::zero()); height * width] }
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

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn data(&self) -> &[Complex<T>] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [Complex<T>] {
        &mut self.data
    }

    pub fn into_data(self) -> Vec<Complex<T>> {
        self.data
    }

    pub fn get(&self, row: usize, col: usize) -> Complex<T> {
        self.data[row * self.width + col]
    }

    pub fn norm(&self) -> T {
        self.data.iter().map(|c| c.norm_sqr()).sum::<T>().sqrt()
    }

    /// Real part of the Hermitian inner product `⟨self, other⟩ = Σ conj(a)·b`.
    pub fn dot_re(&self, other: &ComplexGrid<T>) -> T {
        self.data.iter().zip(&other.data).map(|(a, b)| a.re * b.re + a.im * b.im).sum()
    }

    pub fn cast<U: Real>(&self) -> ComplexGrid<U> {
        ComplexGrid::from_vec_unchecked(
            self.height,
            self.width,
            self.data.iter().map(|c| Complex::new(U::lit(c.re.as_f64()), U::lit(c.im.as_f64()))).collect(),
        )
    }
}

/// Horizontal and vertical differences of an image.
#[derive(Debug, Clone, PartialEq)]
pub struct GradientField<T> {
    pub height: usize,
    pub width: usize,
    pub dx: Vec<T>,
    pub dy: Vec<T>,
}

impl<T: Real> GradientField<T> {
    pub fn new(height: usize, width: usize, dx: Vec<T>, dy: Vec<T>) -> Result<Self> {
        let n = height * width;
        if n == 0 || dx.len() != n || dy.len() != n {
            return invalid(format!(
                "gradient field components must both have {n} entries (got {} and {})",
                dx.len(),
                dy.len()
            ));
        }
        Ok(Self { height, width, dx, dy })
    }

    pub fn zeros(height: usize, width: usize) -> Self {
        let n = height * width;
        Self { height, width, dx: vec![T::zero(); n], dy: vec![T::zero(); n] }
    }

    pub fn len(&self) -> usize {
        self.dx.len()
    }

    pub fn is_empty(&self) -> bool {
        self.dx.is_empty()
    }

    pub fn dot(&self, other: &GradientField<T>) -> T {
        dot(&self.dx, &other.dx) + dot(&self.dy, &other.dy)
    }

    pub fn norm(&self) -> T {
        self.dot(self).sqrt()
    }

    /// Isotropic total variation `Σ √(dx² + dy²)`.
    pub fn l12_norm(&self) -> T {
        self.dx.iter().zip(&self.dy).map(|(&a, &b)| (a * a + b * b).sqrt()).sum()
    }

    pub fn is_finite(&self) -> bool {
        self.dx.iter().chain(&self.dy).all(|v| v.is_finite())
    }
}
