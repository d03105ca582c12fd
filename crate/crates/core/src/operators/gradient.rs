//! Periodic forward-difference gradient and its negative adjoint.

use crate::error::{invalid, Result};
use crate::image::{GradientField, Image};
use crate::scalar::Real;

/// Forward differences with periodic wrap: `dx = x[r, c+1] − x[r, c]`,
/// `dy = x[r+1, c] − x[r, c]`.
pub fn grad2<T: Real>(img: &Image<T>) -> GradientField<T> {
    let (h, w) = img.shape();
    let mut field = GradientField::zeros(h, w);
    grad2_into(img.data(), h, w, &mut field.dx, &mut field.dy);
    field
}

pub(crate) fn grad2_into<T: Real>(x: &[T], h: usize, w: usize, dx: &mut [T], dy: &mut [T]) {
    for r in 0..h {
        let down = if r + 1 == h { 0 } else { r + 1 };
        let row = &x[r * w..(r + 1) * w];
        let below = &x[down * w..(down + 1) * w];
        let gx = &mut dx[r * w..(r + 1) * w];
        for c in 0..w - 1 {
            gx[c] = row[c + 1] - row[c];
        }
        gx[w - 1] = row[0] - row[w - 1];
        for ((g, &b), &v) in dy[r * w..(r + 1) * w].iter_mut().zip(below).zip(row) {
            *g = b - v;
        }
    }
}

/// Discrete divergence, defined as `−∇ᵀ` for the periodic gradient.
pub fn div2<T: Real>(field: &GradientField<T>) -> Result<Image<T>> {
    let (h, w) = (field.height, field.width);
    if h == 0 || w == 0 || field.dx.len() != h * w || field.dy.len() != h * w {
        return invalid("gradient field shape does not match its declared dimensions");
    }
    let mut out = vec![T::zero(); h * w];
    div2_into(&field.dx, &field.dy, h, w, &mut out);
    Ok(Image::from_vec_unchecked(h, w, out))
}

pub(crate) fn div2_into<T: Real>(dx: &[T], dy: &[T], h: usize, w: usize, out: &mut [T]) {
    for r in 0..h {
        let up = if r == 0 { h - 1 } else { r - 1 };
        let gx = &dx[r * w..(r + 1) * w];
        let gy = &dy[r * w..(r + 1) * w];
        let above = &dy[up * w..(up + 1) * w];
        let o = &mut out[r * w..(r + 1) * w];
        o[0] = gx[0] - gx[w - 1];
        for c in 1..w {
            o[c] = gx[c] - gx[c - 1];
        }
        for ((o, &g), &a) in o.iter_mut().zip(gy).zip(above) {
            *o += g - a;
        }
    }
}

/// Fourier-domain eigenvalues of `∇ᵀ∇` (the periodic negative Laplacian),
/// indexed like an unshifted FFT grid.
pub fn laplacian_eigenvalues<T: Real>(h: usize, w: usize) -> Vec<T> {
    let four = T::lit(4.0);
    let sy: Vec<T> = (0..h)
        .map(|k| {
            let s = (T::PI() * T::from_usize_lossy(k) / T::from_usize_lossy(h)).sin();
            four * s * s
        })
        .collect();
    let sx: Vec<T> = (0..w)
        .map(|k| {
            let s = (T::PI() * T::from_usize_lossy(k) / T::from_usize_lossy(w)).sin();
            four * s * s
        })
        .collect();
    let mut out = Vec::with_capacity(h * w);
    for a in &sy {
        for b in &sx {
            out.push(*a + *b);
        }
    }
    out
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

    fn random_field(h: usize, w: usize, seed: u64) -> GradientField<f64> {
        let a = random_image(h, w, seed);
        let b = random_image(h, w, seed + 1);
        GradientField::new(h, w, a.into_data(), b.into_data()).unwrap()
    }

    #[test]
    fn constant_has_zero_gradient() {
        let g = grad2(&Image::filled(7, 5, 3.25));
        assert!(g.dx.iter().chain(&g.dy).all(|&v| v == 0.0));
    }

    #[test]
    fn adjoint_identity() {
        for s in 0..20 {
            let x = random_image(13, 9, 2 * s);
            let u = random_field(13, 9, 100 + 2 * s);
            let lhs = grad2(&x).dot(&u);
            let rhs = x.dot(&div2(&u).unwrap());
            assert!((lhs + rhs).abs() <= 1e-10 * lhs.abs().max(1.0));
        }
    }

    #[test]
    fn malformed_field_rejected() {
        let f = GradientField { height: 4, width: 4, dx: vec![0.0; 16], dy: vec![0.0; 15] };
        assert!(div2(&f).is_err());
    }

    #[test]
    fn laplacian_eigenvalues_match_operator() {
        use crate::operators::fft::Fft2;
        use num_complex::Complex;
        let (h, w) = (8, 6);
        let x = random_image(h, w, 3);
        let lap = div2(&grad2(&x)).unwrap().scaled(-1.0);
        let fft = Fft2::<f64>::new(h, w);
        let mut freq = vec![Complex::new(0.0, 0.0); h * w];
        fft.forward_real_into(x.data(), &mut freq);
        for (v, e) in freq.iter_mut().zip(laplacian_eigenvalues::<f64>(h, w)) {
            *v = *v * e;
        }
        let mut out = vec![0.0; h * w];
        fft.inverse_real_into(&mut freq, &mut out);
        let via_fft = Image::new(h, w, out).unwrap();
        assert!(via_fft.distance(&lap) < 1e-12);
    }
}
