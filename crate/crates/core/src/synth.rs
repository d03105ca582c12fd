//! Synthetic truths and simulated observations.

use num_complex::Complex;
use rand::seq::index::sample;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Result};
use crate::image::{ComplexGrid, Image};
use crate::model::{Forward, Observation};
use crate::scalar::Real;

/// `(intensity, semi-axis x, semi-axis y, centre x, centre y, rotation°)` of
/// the modified Shepp–Logan head on `[-1, 1]²` (y pointing up).
const SHEPP_LOGAN: [[f64; 6]; 10] = [
    [1.0, 0.69, 0.92, 0.0, 0.0, 0.0],
    [-0.8, 0.6624, 0.874, 0.0, -0.0184, 0.0],
    [-0.2, 0.11, 0.31, 0.22, 0.0, -18.0],
    [-0.2, 0.16, 0.41, -0.22, 0.0, 18.0],
    [0.1, 0.21, 0.25, 0.0, 0.35, 0.0],
    [0.1, 0.046, 0.046, 0.0, 0.1, 0.0],
    [0.1, 0.046, 0.046, 0.0, -0.1, 0.0],
    [0.1, 0.046, 0.023, -0.08, -0.605, 0.0],
    [0.1, 0.023, 0.023, 0.0, -0.606, 0.0],
    [0.1, 0.023, 0.046, 0.06, -0.605, 0.0],
];

/// Indices of the three small spots near the bottom of the head.
const SPOTS: [usize; 3] = [7, 8, 9];

/// Subsamples per axis used to anti-alias ellipse edges.
const SUPERSAMPLE: usize = 4;

fn inside(e: &[f64; 6], x: f64, y: f64) -> bool {
    let (s, c) = e[5].to_radians().sin_cos();
    let (dx, dy) = (x - e[3], y - e[4]);
    let u = dx * c + dy * s;
    let v = -dx * s + dy * c;
    (u / e[1]).powi(2) + (v / e[2]).powi(2) <= 1.0
}

fn render(size: usize, ellipses: &[usize]) -> Image<f64> {
    let k = SUPERSAMPLE;
    let inv = 1.0 / (k * k) as f64;
    Image::from_fn(size, size, |r, c| {
        let mut acc = 0.0;
        for sr in 0..k {
            for sc in 0..k {
                let x = 2.0 * ((c * k + sc) as f64 + 0.5) / (size * k) as f64 - 1.0;
                let y = 1.0 - 2.0 * ((r * k + sr) as f64 + 0.5) / (size * k) as f64;
                let v: f64 = ellipses
                    .iter()
                    .filter(|&&i| inside(&SHEPP_LOGAN[i], x, y))
                    .map(|&i| SHEPP_LOGAN[i][0])
                    .sum();
                acc += v;
            }
        }
        (acc * inv).clamp(0.0, 1.0)
    })
}

fn check_size(size: usize) -> Result<()> {
    if size < 32 {
        return invalid(format!("phantom size must be at least 32, got {size}"));
    }
    Ok(())
}

/// Modified Shepp–Logan phantom, intensities in `[0, 1]`, area-averaged
/// over 4×4 subpixels.
pub fn make_phantom(size: usize) -> Result<Image<f64>> {
    check_size(size)?;
    Ok(render(size, &(0..SHEPP_LOGAN.len()).collect::<Vec<_>>()))
}

/// Pixels touched by the three bottom spots, grown by `dilate` pixels.
pub fn phantom_spot_mask(size: usize, dilate: usize) -> Result<Vec<bool>> {
    check_size(size)?;
    let spots = render(size, &SPOTS);
    let base: Vec<bool> = spots.data().iter().map(|&v| v > 0.0).collect();
    let d = dilate as isize;
    Ok((0..size * size)
        .map(|i| {
            let (r, c) = ((i / size) as isize, (i % size) as isize);
            (-d..=d).any(|dr| {
                (-d..=d).any(|dc| {
                    let (rr, cc) = (r + dr, c + dc);
                    rr >= 0
                        && cc >= 0
                        && (rr as usize) < size
                        && (cc as usize) < size
                        && base[rr as usize * size + cc as usize]
                })
            })
        })
        .collect())
}

/// `n_sources` unit impulses at distinct uniformly drawn pixels.
pub fn make_sparse_scene(size: usize, n_sources: usize, seed: u64) -> Result<Image<f64>> {
    if size == 0 {
        return invalid("scene size must be positive");
    }
    if n_sources >= size * size {
        return invalid(format!("{n_sources} sources do not fit a {size}x{size} scene"));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut img = Image::zeros(size, size);
    for idx in sample(&mut rng, size * size, n_sources) {
        img.data_mut()[idx] = 1.0;
    }
    Ok(img)
}

/// Noise statistics of a simulated observation.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SimulationReport {
    pub sigma: f64,
    /// Root mean square of the noise actually drawn, per real component.
    pub realized_noise_std: f64,
    /// `10 log10(var(Ax) / σ²)`.
    pub snr_db: f64,
}

/// Noise level giving a prescribed blurred SNR: `σ² = var(Hx) / 10^(dB/10)`.
pub fn sigma_for_snr<T: Real>(clean: &Image<T>, snr_db: f64) -> f64 {
    let m = clean.mean().as_f64();
    let var = clean.data().iter().map(|v| (v.as_f64() - m).powi(2)).sum::<f64>() / clean.len() as f64;
    (var / 10f64.powf(snr_db / 10.0)).sqrt()
}

/// Applies the forward operator and adds seeded Gaussian noise with standard
/// deviation `sigma` on every real component of every observed entry.
pub fn simulate_observation<T: Real>(
    truth: &Image<T>,
    forward: &Forward<T>,
    sigma: f64,
    seed: u64,
) -> Result<(Observation<T>, SimulationReport)> {
    if !(sigma >= 0.0) || !sigma.is_finite() {
        return invalid(format!("noise level must be nonnegative, got {sigma}"));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let normal = Normal::new(0.0, sigma.max(f64::MIN_POSITIVE)).expect("valid sd");
    let mut draw = || if sigma == 0.0 { 0.0 } else { normal.sample(&mut rng) };
    let mut sq = 0.0;
    let mut count = 0usize;
    match forward {
        Forward::Sampling(op) => {
            let clean = op.apply(truth)?;
            let keep = op.mask().keep();
            let (h, w) = clean.shape();
            let data: Vec<Complex<T>> = clean
                .data()
                .iter()
                .zip(keep)
                .map(|(&z, &k)| {
                    if !k {
                        return z;
                    }
                    let (a, b) = (draw(), draw());
                    sq += a * a + b * b;
                    count += 2;
                    z + Complex::new(T::lit(a), T::lit(b))
                })
                .collect();
            let kept_vals: Vec<f64> = clean
                .data()
                .iter()
                .zip(keep)
                .filter(|(_, &k)| k)
                .flat_map(|(z, _)| [z.re.as_f64(), z.im.as_f64()])
                .collect();
            let report = report(sigma, sq, count, &kept_vals);
            Ok((Observation::Fourier(ComplexGrid::new(h, w, data)?), report))
        }
        Forward::Blur(op) => {
            let clean = op.apply(truth)?;
            let data: Vec<T> = clean
                .data()
                .iter()
                .map(|&v| {
                    let e = draw();
                    sq += e * e;
                    count += 1;
                    v + T::lit(e)
                })
                .collect();
            let vals: Vec<f64> = clean.data().iter().map(|v| v.as_f64()).collect();
            let (h, w) = clean.shape();
            Ok((Observation::Spatial(Image::new(h, w, data)?), report(sigma, sq, count, &vals)))
        }
        Forward::Identity => {
            let data: Vec<T> = truth
                .data()
                .iter()
                .map(|&v| {
                    let e = draw();
                    sq += e * e;
                    count += 1;
                    v + T::lit(e)
                })
                .collect();
            let vals: Vec<f64> = truth.data().iter().map(|v| v.as_f64()).collect();
            let (h, w) = truth.shape();
            Ok((Observation::Spatial(Image::new(h, w, data)?), report(sigma, sq, count, &vals)))
        }
        Forward::Absent => invalid("model has no forward operator to simulate"),
    }
}

fn report(sigma: f64, sq: f64, count: usize, clean: &[f64]) -> SimulationReport {
    let m = clean.iter().sum::<f64>() / clean.len().max(1) as f64;
    let var = clean.iter().map(|v| (v - m).powi(2)).sum::<f64>() / clean.len().max(1) as f64;
    SimulationReport {
        sigma,
        realized_noise_std: (sq / count.max(1) as f64).sqrt(),
        snr_db: if sigma > 0.0 { 10.0 * (var / (sigma * sigma)).log10() } else { f64::INFINITY },
    }
}
