//! Abstract linear maps and power-iteration norm estimation.

use num_complex::Complex;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::gradient::{div2_into, grad2_into};
use super::mask::FourierSampling;
use super::psf::Convolution;
use crate::image::{ComplexGrid, Image};
use crate::scalar::{norm2, Real};

/// Real linear map between flat vector spaces, with its adjoint.
pub trait LinearMap<T: Real> {
    fn input_len(&self) -> usize;
    fn output_len(&self) -> usize;
    fn apply(&self, x: &[T]) -> Vec<T>;
    fn adjoint(&self, y: &[T]) -> Vec<T>;
}

/// `x ↦ c·x` on `ℝⁿ`; `c = 1` is the identity.
#[derive(Debug, Clone, Copy)]
pub struct ScaledIdentity<T> {
    pub len: usize,
    pub scale: T,
}

impl<T: Real> LinearMap<T> for ScaledIdentity<T> {
    fn input_len(&self) -> usize {
        self.len
    }
    fn output_len(&self) -> usize {
        self.len
    }
    fn apply(&self, x: &[T]) -> Vec<T> {
        x.iter().map(|&v| self.scale * v).collect()
    }
    fn adjoint(&self, y: &[T]) -> Vec<T> {
        self.apply(y)
    }
}

/// Periodic gradient as a map `ℝⁿ → ℝ²ⁿ` (dx block then dy block).
#[derive(Debug, Clone, Copy)]
pub struct GradientMap {
    pub height: usize,
    pub width: usize,
}

impl<T: Real> LinearMap<T> for GradientMap {
    fn input_len(&self) -> usize {
        self.height * self.width
    }
    fn output_len(&self) -> usize {
        2 * self.height * self.width
    }
    fn apply(&self, x: &[T]) -> Vec<T> {
        let n = self.height * self.width;
        let mut out = vec![T::zero(); 2 * n];
        let (dx, dy) = out.split_at_mut(n);
        grad2_into(x, self.height, self.width, dx, dy);
        out
    }
    fn adjoint(&self, y: &[T]) -> Vec<T> {
        let n = self.height * self.width;
        let mut out = vec![T::zero(); n];
        div2_into(&y[..n], &y[n..], self.height, self.width, &mut out);
        out.iter_mut().for_each(|v| *v = -*v);
        out
    }
}

impl<T: Real> LinearMap<T> for Convolution<T> {
    fn input_len(&self) -> usize {
        let (h, w) = self.shape();
        h * w
    }
    fn output_len(&self) -> usize {
        LinearMap::<T>::input_len(self)
    }
    fn apply(&self, x: &[T]) -> Vec<T> {
        let (h, w) = self.shape();
        Convolution::apply(self, &Image::from_vec_unchecked(h, w, x.to_vec()))
            .expect("shape fixed at construction")
            .into_data()
    }
    fn adjoint(&self, y: &[T]) -> Vec<T> {
        let (h, w) = self.shape();
        Convolution::adjoint(self, &Image::from_vec_unchecked(h, w, y.to_vec()))
            .expect("shape fixed at construction")
            .into_data()
    }
}

/// Masked DFT viewed as `ℝⁿ → ℝ²ⁿ` (interleaved real/imaginary parts).
impl<T: Real> LinearMap<T> for FourierSampling<T> {
    fn input_len(&self) -> usize {
        let (h, w) = self.mask().shape();
        h * w
    }
    fn output_len(&self) -> usize {
        2 * LinearMap::<T>::input_len(self)
    }
    fn apply(&self, x: &[T]) -> Vec<T> {
        let (h, w) = self.mask().shape();
        let freq = FourierSampling::apply(self, &Image::from_vec_unchecked(h, w, x.to_vec()))
            .expect("shape fixed at construction");
        freq.data().iter().flat_map(|c| [c.re, c.im]).collect()
    }
    fn adjoint(&self, y: &[T]) -> Vec<T> {
        let (h, w) = self.mask().shape();
        let data = y.chunks_exact(2).map(|p| Complex::new(p[0], p[1])).collect();
        let grid = ComplexGrid::from_vec_unchecked(h, w, data);
        FourierSampling::adjoint(self, &grid).expect("shape fixed at construction").into_data()
    }
}

/// Largest singular value of `op` by power iteration on `AᵀA` from a seeded
/// random start. Returns 0 for the zero operator.
pub fn operator_norm<T: Real, M: LinearMap<T> + ?Sized>(op: &M, iters: usize, seed: u64) -> T {
    let iters = iters.max(1);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut v: Vec<T> = (0..op.input_len()).map(|_| T::lit(rng.random_range(-1.0..1.0))).collect();
    let nv = norm2(&v);
    if nv == T::zero() {
        return T::zero();
    }
    v.iter_mut().for_each(|x| *x /= nv);
    let mut estimate = T::zero();
    for _ in 0..iters {
        let av = op.apply(&v);
        estimate = norm2(&av);
        let mut w = op.adjoint(&av);
        let nw = norm2(&w);
        if nw == T::zero() {
            return T::zero();
        }
        w.iter_mut().for_each(|x| *x /= nw);
        v = w;
    }
    estimate.max(norm2(&op.apply(&v)))
}
