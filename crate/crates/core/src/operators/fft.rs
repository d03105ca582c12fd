//! Unitary two-dimensional DFT built on row/column passes of `rustfft`.

use std::sync::Arc;

use num_complex::Complex;
use realfft::{ComplexToReal, RealFftPlanner, RealToComplex};
use rustfft::{Fft, FftPlanner};

use crate::error::{invalid, Result};
use crate::image::{ComplexGrid, Image};
use crate::scalar::Real;

/// Pre-planned 2-D transform for a fixed grid shape.
///
/// Both directions carry the `1/√n` factor, so the transform is unitary.
#[derive(Clone)]
pub struct Fft2<T: Real> {
    height: usize,
    width: usize,
    row_fwd: Arc<dyn Fft<T>>,
    row_inv: Arc<dyn Fft<T>>,
    col_fwd: Arc<dyn Fft<T>>,
    col_inv: Arc<dyn Fft<T>>,
    row_r2c: Arc<dyn RealToComplex<T>>,
    row_c2r: Arc<dyn ComplexToReal<T>>,
    scale: T,
}

/// Reusable buffers for [`Fft2::filter_real`].
#[derive(Debug, Clone, Default)]
pub struct FilterWork<T> {
    half: Vec<Complex<T>>,
    tr: Vec<Complex<T>>,
    scratch: Vec<Complex<T>>,
}

impl<T: Real> std::fmt::Debug for Fft2<T> {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Fft2").field("height", &self.height).field("width", &self.width).finish()
    }
}

impl<T: Real> Fft2<T> {
    pub fn new(height: usize, width: usize) -> Self {
        assert!(height > 0 && width > 0, "FFT dimensions must be positive");
        let mut planner = FftPlanner::new();
        let mut real_planner = RealFftPlanner::new();
        Self {
            height,
            width,
            row_fwd: planner.plan_fft_forward(width),
            row_inv: planner.plan_fft_inverse(width),
            col_fwd: planner.plan_fft_forward(height),
            col_inv: planner.plan_fft_inverse(height),
            row_r2c: real_planner.plan_fft_forward(width),
            row_c2r: real_planner.plan_fft_inverse(width),
            scale: T::one() / T::from_usize_lossy(height * width).sqrt(),
        }
    }

    pub fn shape(&self) -> (usize, usize) {
        (self.height, self.width)
    }

    pub fn len(&self) -> usize {
        self.height * self.width
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    fn run(&self, buf: &mut [Complex<T>], rows: &Arc<dyn Fft<T>>, cols: &Arc<dyn Fft<T>>) {
        let (h, w) = (self.height, self.width);
        debug_assert_eq!(buf.len(), h * w);
        let scratch_len = rows
            .get_inplace_scratch_len()
            .max(cols.get_inplace_scratch_len());
        let mut scratch = vec![Complex::new(T::zero(), T::zero()); scratch_len];
        rows.process_with_scratch(buf, &mut scratch);
        if h > 1 {
            let mut tr = vec![Complex::new(T::zero(), T::zero()); h * w];
            transpose(buf, &mut tr, h, w);
            cols.process_with_scratch(&mut tr, &mut scratch);
            transpose(&tr, buf, w, h);
        }
        for v in buf.iter_mut() {
            *v = *v * self.scale;
        }
    }

    /// In-place unitary forward transform of a row-major buffer.
    pub fn forward_inplace(&self, buf: &mut [Complex<T>]) {
        self.run(buf, &self.row_fwd, &self.col_fwd);
    }

    /// In-place unitary inverse transform of a row-major buffer.
    pub fn inverse_inplace(&self, buf: &mut [Complex<T>]) {
        self.run(buf, &self.row_inv, &self.col_inv);
    }

    /// Writes the unitary spectrum of a real image into `out`.
    pub fn forward_real_into(&self, img: &[T], out: &mut [Complex<T>]) {
        for (o, &v) in out.iter_mut().zip(img) {
            *o = Complex::new(v, T::zero());
        }
        self.forward_inplace(out);
    }

    /// Inverse transform of `freq` (consumed as scratch); the real part lands in `out`.
    pub fn inverse_real_into(&self, freq: &mut [Complex<T>], out: &mut [T]) {
        self.inverse_inplace(freq);
        for (o, c) in out.iter_mut().zip(freq.iter()) {
            *o = c.re;
        }
    }

    /// Replaces the real image `x` by `F⁻¹(m ⊙ F x)`, where `apply(i, s)`
    /// multiplies the unitary spectrum entry `s` at row-major index `i` by
    /// `m[i]`. Only the half spectrum `c ≤ w/2` is visited, so `m` must be
    /// conjugate-symmetric (as it is for real kernels and symmetric masks).
    pub fn filter_real(&self, x: &mut [T], work: &mut FilterWork<T>, mut apply: impl FnMut(usize, &mut Complex<T>)) {
        let (h, w) = (self.height, self.width);
        debug_assert_eq!(x.len(), h * w);
        let wh = w / 2 + 1;
        let zero = Complex::new(T::zero(), T::zero());
        let scratch_len = self
            .row_r2c
            .get_scratch_len()
            .max(self.row_c2r.get_scratch_len())
            .max(self.col_fwd.get_inplace_scratch_len())
            .max(self.col_inv.get_inplace_scratch_len());
        work.half.resize(h * wh, zero);
        work.tr.resize(h * wh, zero);
        work.scratch.resize(scratch_len, zero);

        for (row, out) in x.chunks_exact_mut(w).zip(work.half.chunks_exact_mut(wh)) {
            self.row_r2c.process_with_scratch(row, out, &mut work.scratch).expect("row transform sizes");
        }
        transpose(&work.half, &mut work.tr, h, wh);
        self.col_fwd.process_with_scratch(&mut work.tr, &mut work.scratch);
        for c in 0..wh {
            for r in 0..h {
                apply(r * w + c, &mut work.tr[c * h + r]);
            }
        }
        self.col_inv.process_with_scratch(&mut work.tr, &mut work.scratch);
        transpose(&work.tr, &mut work.half, wh, h);

        let norm = T::one() / T::from_usize_lossy(h * w);
        for (freq, row) in work.half.chunks_exact_mut(wh).zip(x.chunks_exact_mut(w)) {
            // the real transform insists these are exactly real
            freq[0].im = T::zero();
            if w % 2 == 0 {
                freq[wh - 1].im = T::zero();
            }
            self.row_c2r.process_with_scratch(freq, row, &mut work.scratch).expect("row transform sizes");
            for v in row.iter_mut() {
                *v *= norm;
            }
        }
    }

    pub fn forward(&self, img: &Image<T>) -> Result<ComplexGrid<T>> {
        img.check_shape(self.height, self.width, "dft2")?;
        let mut buf = vec![Complex::new(T::zero(), T::zero()); self.len()];
        self.forward_real_into(img.data(), &mut buf);
        Ok(ComplexGrid::from_vec_unchecked(self.height, self.width, buf))
    }

    pub fn forward_complex(&self, grid: &ComplexGrid<T>) -> Result<ComplexGrid<T>> {
        check_grid(grid, self.height, self.width)?;
        let mut buf = grid.data().to_vec();
        self.forward_inplace(&mut buf);
        Ok(ComplexGrid::from_vec_unchecked(self.height, self.width, buf))
    }

    pub fn inverse(&self, grid: &ComplexGrid<T>) -> Result<ComplexGrid<T>> {
        check_grid(grid, self.height, self.width)?;
        let mut buf = grid.data().to_vec();
        self.inverse_inplace(&mut buf);
        Ok(ComplexGrid::from_vec_unchecked(self.height, self.width, buf))
    }
}

fn check_grid<T: Real>(grid: &ComplexGrid<T>, h: usize, w: usize) -> Result<()> {
    if grid.shape() != (h, w) {
        return invalid(format!(
            "spectrum shape {}x{} does not match transform {h}x{w}",
            grid.height(),
            grid.width()
        ));
    }
    Ok(())
}

fn transpose<T: Copy>(src: &[T], dst: &mut [T], rows: usize, cols: usize) {
    for r in 0..rows {
        let row = &src[r * cols..(r + 1) * cols];
        for (c, &v) in row.iter().enumerate() {
            dst[c * rows + r] = v;
        }
    }
}

/// Unitary 2-D DFT of a real image.
pub fn dft2<T: Real>(img: &Image<T>) -> Result<ComplexGrid<T>> {
    Fft2::new(img.height(), img.width()).forward(img)
}

/// Unitary inverse 2-D DFT.
pub fn idft2<T: Real>(grid: &ComplexGrid<T>) -> Result<ComplexGrid<T>> {
    Fft2::new(grid.height(), grid.width()).inverse(grid)
}

/// Signed frequency index of FFT bin `k` on an axis of length `n`, in `[-n/2, n/2)`.
pub fn signed_frequency(k: usize, n: usize) -> isize {
    let k = k as isize;
    let n = n as isize;
    if k >= (n + 1) / 2 {
        k - n
    } else {
        k
    }
}

/// Index of the bin holding frequency `-k`.
pub fn mirror_index(k: usize, n: usize) -> usize {
    (n - k) % n
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_image(h: usize, w: usize, seed: u64) -> Image<f64> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        Image::from_fn(h, w, |_, _| rng.random_range(-1.0..1.0))
    }

    #[test]
    fn constant_image_has_only_dc() {
        let m = 8;
        let c = 0.7;
        let freq = dft2(&Image::filled(m, m, c)).unwrap();
        assert!((freq.get(0, 0).re - c * m as f64).abs() < 1e-12);
        for (i, v) in freq.data().iter().enumerate().skip(1) {
            assert!(v.norm() < 1e-12, "bin {i} = {v}");
        }
    }

    #[test]
    fn inverse_and_parseval() {
        for &(h, w) in &[(16, 16), (12, 20), (1, 7), (9, 1)] {
            let x = random_image(h, w, 3);
            let fx = dft2(&x).unwrap();
            assert!(((fx.norm() - x.norm()) / x.norm()).abs() < 1e-12);
            let back = idft2(&fx).unwrap();
            let err: f64 = back
                .data()
                .iter()
                .zip(x.data())
                .map(|(c, &v)| (c.re - v).powi(2) + c.im.powi(2))
                .sum::<f64>()
                .sqrt();
            assert!(err / x.norm() < 1e-12);
        }
    }

    #[test]
    fn shape_mismatch_is_rejected() {
        let plan = Fft2::<f64>::new(8, 8);
        assert!(plan.forward(&Image::zeros(8, 4)).is_err());
        assert!(plan.inverse(&ComplexGrid::zeros(4, 8)).is_err());
    }

    #[test]
    fn single_precision_round_trip() {
        let x: Image<f32> = random_image(16, 16, 9).cast();
        let back = idft2(&dft2(&x).unwrap()).unwrap();
        for (c, &v) in back.data().iter().zip(x.data()) {
            assert!((c.re - v).abs() < 1e-5);
        }
    }

    #[test]
    fn frequency_helpers() {
        assert_eq!(signed_frequency(0, 8), 0);
        assert_eq!(signed_frequency(3, 8), 3);
        assert_eq!(signed_frequency(4, 8), -4);
        assert_eq!(signed_frequency(7, 8), -1);
        assert_eq!(signed_frequency(3, 7), 3);
        assert_eq!(signed_frequency(4, 7), -3);
        assert_eq!(mirror_index(0, 8), 0);
        assert_eq!(mirror_index(1, 8), 7);
        assert_eq!(mirror_index(4, 8), 4);
    }

    #[test]
    fn real_filter_matches_complex_path() {
        for &(h, w) in &[(16, 16), (12, 9), (1, 7), (9, 1), (5, 6)] {
            let x = random_image(h, w, 11);
            let f = Fft2::<f64>::new(h, w);
            // conjugate-symmetric multiplier: real even part plus a shift phase
            let mult = |i: usize| {
                let (r, c) = (i / w, i % w);
                let fy = signed_frequency(r, h) as f64 / h as f64;
                let fx = signed_frequency(c, w) as f64 / w as f64;
                let phase = -2.0 * std::f64::consts::PI * (2.0 * fy + fx);
                let mag = 1.0 / (1.0 + 3.0 * (fy * fy + fx * fx));
                // Nyquist bins must stay real for the multiplier to be symmetric
                let nyq = (h % 2 == 0 && 2 * r == h) || (w % 2 == 0 && 2 * c == w);
                if nyq { Complex::new(mag, 0.0) } else { Complex::from_polar(mag, phase) }
            };
            let mut freq = f.forward(&x).unwrap();
            for (i, s) in freq.data_mut().iter_mut().enumerate() {
                *s *= mult(i);
            }
            let want = f.inverse(&freq).unwrap();
            let mut got = x.data().to_vec();
            let mut work = FilterWork::default();
            f.filter_real(&mut got, &mut work, |i, s| *s *= mult(i));
            for (a, b) in got.iter().zip(want.data()) {
                assert!((a - b.re).abs() < 1e-12, "{h}x{w}: {a} vs {}", b.re);
            }
            // buffers are reused across calls
            let mut again = x.data().to_vec();
            f.filter_real(&mut again, &mut work, |i, s| *s *= mult(i));
            assert_eq!(again, got);
        }
    }
}
