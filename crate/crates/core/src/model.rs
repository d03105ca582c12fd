//! Convex potentials `g_y(x) = data term + λ·regulariser (+ orthant indicator)`.

use num_complex::Complex;

use crate::error::{invalid, Result};
use crate::image::{ComplexGrid, Image};
use crate::operators::{
    fft::FilterWork, gradient::grad2_into, Convolution, Fft2, FourierSampling, PointSpreadFunction, SamplingMask,
};
use crate::scalar::Real;

/// Posterior family.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum ModelKind {
    /// Masked Fourier data, isotropic TV prior.
    TvTomography,
    /// Blurred data, Laplace (ℓ1) prior.
    L1Deconvolution,
    /// iid `exp(−λ Σ|xᵢ|^q)`, no data.
    GenGaussian,
}

#[derive(Debug, Clone)]
pub enum Forward<T: Real> {
    Sampling(FourierSampling<T>),
    Blur(Convolution<T>),
    Identity,
    /// No likelihood term.
    Absent,
}

#[derive(Debug, Clone, PartialEq)]
pub enum Observation<T> {
    Fourier(ComplexGrid<T>),
    Spatial(Image<T>),
    Absent,
}

/// Value of the potential, split into its parts.
#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct PotentialValue<T> {
    /// `data_term + λ·reg_term`, or `+∞` when the orthant constraint is violated.
    pub total: T,
    pub data_term: T,
    pub reg_term: T,
    pub feasible: bool,
}

/// Immutable description of a log-concave posterior `exp(−g_y)`.
#[derive(Debug, Clone)]
pub struct PosteriorModel<T: Real> {
    kind: ModelKind,
    height: usize,
    width: usize,
    forward: Forward<T>,
    observation: Observation<T>,
    sigma: T,
    lambda: T,
    exponent: T,
    nonneg: bool,
    fft: Fft2<T>,
    /// Fourier diagonal of `AᵀA` (real adjoint).
    normal_diag: Vec<T>,
    /// `Aᵀy`.
    adjoint_obs: Image<T>,
    /// `‖y‖²` over observed entries.
    obs_energy: T,
}

fn check_positive<T: Real>(v: T, name: &str) -> Result<()> {
    if !(v > T::zero()) || !v.is_finite() {
        return invalid(format!("{name} must be positive and finite, got {v}"));
    }
    Ok(())
}

impl<T: Real> PosteriorModel<T> {
    /// `‖y − HFx‖²/2σ² + λ‖∇x‖₁₋₂` with `y` the masked unitary spectrum.
    pub fn tv_tomography(mask: SamplingMask, y: ComplexGrid<T>, sigma: T, lambda: T) -> Result<Self> {
        check_positive(sigma, "sigma")?;
        check_positive(lambda, "lambda")?;
        if y.shape() != mask.shape() {
            return invalid("observation shape does not match the sampling mask");
        }
        let (h, w) = mask.shape();
        let op = FourierSampling::new(mask);
        let adjoint_obs = op.adjoint(&y)?;
        let obs_energy = y
            .data()
            .iter()
            .zip(op.mask().keep())
            .filter(|(_, &k)| k)
            .map(|(c, _)| c.norm_sqr())
            .sum();
        let normal_diag = op.mask().normal_diagonal();
        Ok(Self {
            kind: ModelKind::TvTomography,
            height: h,
            width: w,
            fft: op.fft().clone(),
            forward: Forward::Sampling(op),
            observation: Observation::Fourier(y),
            sigma,
            lambda,
            exponent: T::one(),
            nonneg: false,
            normal_diag,
            adjoint_obs,
            obs_energy,
        })
    }

    /// `‖y − Hx‖²/2σ² + λ‖x‖₁` with `H` a periodic blur.
    pub fn l1_deconvolution(psf: &PointSpreadFunction<T>, y: Image<T>, sigma: T, lambda: T) -> Result<Self> {
        check_positive(sigma, "sigma")?;
        check_positive(lambda, "lambda")?;
        let (h, w) = y.shape();
        let conv = Convolution::new(psf, h, w)?;
        let adjoint_obs = conv.adjoint(&y)?;
        let obs_energy = y.dot(&y);
        Ok(Self {
            kind: ModelKind::L1Deconvolution,
            height: h,
            width: w,
            fft: conv.fft().clone(),
            normal_diag: conv.normal_diagonal(),
            forward: Forward::Blur(conv),
            observation: Observation::Spatial(y),
            sigma,
            lambda,
            exponent: T::one(),
            nonneg: false,
            adjoint_obs,
            obs_energy,
        })
    }

    /// ℓ1 model with identity forward operator: `‖y − x‖²/2σ² + λ‖x‖₁`.
    pub fn l1_denoising(y: Image<T>, sigma: T, lambda: T) -> Result<Self> {
        check_positive(sigma, "sigma")?;
        check_positive(lambda, "lambda")?;
        let (h, w) = y.shape();
        let obs_energy = y.dot(&y);
        Ok(Self {
            kind: ModelKind::L1Deconvolution,
            height: h,
            width: w,
            fft: Fft2::new(h, w),
            normal_diag: vec![T::one(); h * w],
            forward: Forward::Identity,
            adjoint_obs: y.clone(),
            observation: Observation::Spatial(y),
            sigma,
            lambda,
            exponent: T::one(),
            nonneg: false,
            obs_energy,
        })
    }

    /// `λ Σ|xᵢ|^q` on a `height × width` grid.
    pub fn gen_gaussian(height: usize, width: usize, q: T, lambda: T) -> Result<Self> {
        check_positive(lambda, "lambda")?;
        if !(q >= T::one()) || !q.is_finite() {
            return invalid(format!("exponent q must be >= 1, got {q}"));
        }
        if height == 0 || width == 0 {
            return invalid("model dimensions must be positive");
        }
        Ok(Self {
            kind: ModelKind::GenGaussian,
            height,
            width,
            fft: Fft2::new(height, width),
            normal_diag: vec![T::zero(); height * width],
            forward: Forward::Absent,
            observation: Observation::Absent,
            sigma: T::one(),
            lambda,
            exponent: q,
            nonneg: false,
            adjoint_obs: Image::zeros(height, width),
            obs_energy: T::zero(),
        })
    }

    /// Adds (or removes) the nonnegative-orthant constraint.
    pub fn with_nonneg(mut self, nonneg: bool) -> Self {
        self.nonneg = nonneg;
        self
    }

    /// Same forward model and observation with a different regularisation weight.
    pub fn with_lambda(mut self, lambda: T) -> Result<Self> {
        check_positive(lambda, "lambda")?;
        self.lambda = lambda;
        Ok(self)
    }

    pub fn kind(&self) -> ModelKind {
        self.kind
    }

    pub fn shape(&self) -> (usize, usize) {
        (self.height, self.width)
    }

    /// Dimension `n` of the image space.
    pub fn n(&self) -> usize {
        self.height * self.width
    }

    pub fn sigma(&self) -> T {
        self.sigma
    }

    pub fn lambda(&self) -> T {
        self.lambda
    }

    /// `q` of the generalized-Gaussian family (1 for the imaging models).
    pub fn exponent(&self) -> T {
        self.exponent
    }

    pub fn nonneg(&self) -> bool {
        self.nonneg
    }

    pub fn forward(&self) -> &Forward<T> {
        &self.forward
    }

    pub fn observation(&self) -> &Observation<T> {
        &self.observation
    }

    pub(crate) fn fft(&self) -> &Fft2<T> {
        &self.fft
    }

    pub(crate) fn normal_diagonal(&self) -> &[T] {
        &self.normal_diag
    }

    pub(crate) fn has_data_term(&self) -> bool {
        !matches!(self.forward, Forward::Absent)
    }

    pub(crate) fn identity_forward(&self) -> bool {
        matches!(self.forward, Forward::Identity)
    }

    /// `Aᵀy`: the default warm start for the MAP solver.
    pub fn adjoint_observation(&self) -> &Image<T> {
        &self.adjoint_obs
    }

    fn check_input(&self, x: &Image<T>) -> Result<()> {
        x.check_shape(self.height, self.width, "potential argument")?;
        if !x.is_finite() {
            return invalid("potential argument contains non-finite values");
        }
        Ok(())
    }

    /// Regulariser value without the λ factor.
    pub(crate) fn regulariser(&self, x: &[T], scratch: &mut Vec<T>) -> T {
        match self.kind {
            ModelKind::TvTomography => {
                let n = x.len();
                scratch.resize(2 * n, T::zero());
                let (dx, dy) = scratch.split_at_mut(n);
                grad2_into(x, self.height, self.width, dx, dy);
                dx.iter().zip(dy.iter()).map(|(&a, &b)| (a * a + b * b).sqrt()).sum()
            }
            ModelKind::L1Deconvolution => x.iter().map(|v| v.abs()).sum(),
            ModelKind::GenGaussian => {
                let q = self.exponent;
                if q == T::one() {
                    x.iter().map(|v| v.abs()).sum()
                } else if q == T::lit(2.0) {
                    x.iter().map(|&v| v * v).sum()
                } else {
                    x.iter().map(|v| v.abs().powf(q)).sum()
                }
            }
        }
    }

    /// `‖y − Ax‖²/2σ²` over observed entries.
    pub(crate) fn data_misfit(&self, x: &[T], ws: &mut PotentialScratch<T>) -> T {
        let PotentialScratch { freq, hx, work, .. } = ws;
        let two_s2 = T::lit(2.0) * self.sigma * self.sigma;
        match (&self.forward, &self.observation) {
            (Forward::Sampling(op), Observation::Fourier(y)) => {
                freq.resize(x.len(), Complex::new(T::zero(), T::zero()));
                self.fft.forward_real_into(x, freq);
                let s: T = freq
                    .iter()
                    .zip(y.data())
                    .zip(op.mask().keep())
                    .filter(|(_, &k)| k)
                    .map(|((a, b), _)| (*b - *a).norm_sqr())
                    .sum();
                s / two_s2
            }
            (Forward::Blur(conv), Observation::Spatial(y)) => {
                hx.clear();
                hx.extend_from_slice(x);
                let k = conv.transfer_function();
                self.fft.filter_real(hx, work, |i, v| *v = *v * k[i]);
                let s: T = hx.iter().zip(y.data()).map(|(&a, &b)| (b - a) * (b - a)).sum();
                s / two_s2
            }
            (Forward::Identity, Observation::Spatial(y)) => {
                let s: T = x.iter().zip(y.data()).map(|(&a, &b)| (b - a) * (b - a)).sum();
                s / two_s2
            }
            _ => T::zero(),
        }
    }

    /// Potential without validation, for hot loops. Returns `+∞` when infeasible.
    pub(crate) fn potential_raw(&self, x: &[T], ws: &mut PotentialScratch<T>) -> PotentialValue<T> {
        let feasible = !self.nonneg || x.iter().all(|&v| v >= T::zero());
        let data_term = self.data_misfit(x, ws);
        let reg_term = self.regulariser(x, &mut ws.real);
        let total = if feasible { data_term + self.lambda * reg_term } else { T::infinity() };
        PotentialValue { total, data_term, reg_term, feasible }
    }

    /// Evaluates `g_y(x)`.
    pub fn eval_potential(&self, x: &Image<T>) -> Result<PotentialValue<T>> {
        self.check_input(x)?;
        Ok(self.potential_raw(x.data(), &mut PotentialScratch::default()))
    }

    /// Gradient of the data term `Aᵀ(Ax − y)/σ²`.
    pub fn data_gradient(&self, x: &Image<T>) -> Result<Image<T>> {
        self.check_input(x)?;
        let inv_s2 = T::one() / (self.sigma * self.sigma);
        if !self.has_data_term() {
            return Ok(Image::zeros(self.height, self.width));
        }
        let mut out = vec![T::zero(); self.n()];
        if self.identity_forward() {
            out.copy_from_slice(x.data());
        } else {
            out.copy_from_slice(x.data());
            let d = &self.normal_diag;
            self.fft.filter_real(&mut out, &mut FilterWork::default(), |i, v| *v = *v * d[i]);
        }
        for (o, &a) in out.iter_mut().zip(self.adjoint_obs.data()) {
            *o = (*o - a) * inv_s2;
        }
        Ok(Image::from_vec_unchecked(self.height, self.width, out))
    }

    /// `‖y‖²/2σ²`, the data term at `x = 0`.
    pub fn observation_energy(&self) -> T {
        self.obs_energy / (T::lit(2.0) * self.sigma * self.sigma)
    }
}

/// Reusable buffers for potential evaluation.
#[derive(Debug, Default, Clone)]
pub struct PotentialScratch<T> {
    freq: Vec<Complex<T>>,
    real: Vec<T>,
    hx: Vec<T>,
    work: FilterWork<T>,
}

/// Convexity defect `g(t·x1 + (1−t)·x2) − t·g(x1) − (1−t)·g(x2)` (≤ 0 for convex `g`).
pub fn log_concavity_gap_check<T: Real>(
    model: &PosteriorModel<T>,
    x1: &Image<T>,
    x2: &Image<T>,
    t: T,
) -> Result<T> {
    if !(t >= T::zero() && t <= T::one()) {
        return invalid(format!("interpolation weight must lie in [0, 1], got {t}"));
    }
    let g1 = model.eval_potential(x1)?.total;
    let g2 = model.eval_potential(x2)?.total;
    let mid = x1.lin_comb(t, x2, T::one() - t);
    let gm = model.eval_potential(&mid)?.total;
    if t == T::zero() {
        return Ok(gm - g2);
    }
    if t == T::one() {
        return Ok(gm - g1);
    }
    Ok(gm - t * g1 - (T::one() - t) * g2)
}

/// Tolerance the convexity gap is held to: `1e−9·(1 + |g(x1)| + |g(x2)|)`.
pub fn convexity_tolerance<T: Real>(model: &PosteriorModel<T>, x1: &Image<T>, x2: &Image<T>) -> Result<T> {
    let g1 = model.eval_potential(x1)?.total;
    let g2 = model.eval_potential(x2)?.total;
    Ok(T::lit(1e-9) * (T::one() + g1.abs() + g2.abs()))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::operators::fourier_subsample;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_image(h: usize, w: usize, seed: u64) -> Image<f64> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        Image::from_fn(h, w, |_, _| rng.random_range(-1.0..1.0))
    }

    fn tv_model(seed: u64) -> PosteriorModel<f64> {
        let mask = SamplingMask::radial(16, 16, 6, seed).unwrap();
        let truth = random_image(16, 16, seed);
        let y = fourier_subsample(&truth, &mask).unwrap();
        PosteriorModel::tv_tomography(mask, y, 0.1, 2.0).unwrap()
    }

    #[test]
    fn gen_gaussian_zero_is_zero() {
        let m = PosteriorModel::gen_gaussian(4, 4, 1.0, 1.0).unwrap();
        let v = m.eval_potential(&Image::zeros(4, 4)).unwrap();
        assert_eq!(v.total, 0.0);
        assert!(v.feasible);
    }

    #[test]
    fn l1_hand_computation() {
        let m = PosteriorModel::l1_denoising(Image::zeros(3, 3), 1.0, 1.0).unwrap();
        let mut x: Image<f64> = Image::zeros(3, 3);
        x.set(1, 2, 2.0);
        let v = m.eval_potential(&x).unwrap();
        assert!((v.data_term - 2.0).abs() < 1e-15);
        assert!((v.reg_term - 2.0).abs() < 1e-15);
        assert!((v.total - 4.0).abs() < 1e-15);
    }

    #[test]
    fn tv_constant_image_exact_data_is_zero() {
        let mask = SamplingMask::radial(16, 16, 5, 1).unwrap();
        let x: Image<f64> = Image::filled(16, 16, 0.4);
        let y = fourier_subsample(&x, &mask).unwrap();
        let m = PosteriorModel::tv_tomography(mask, y, 0.01, 3.0).unwrap();
        assert!(m.eval_potential(&x).unwrap().total.abs() < 1e-20);
    }

    #[test]
    fn tv_reg_is_shift_invariant_in_intensity() {
        let m = tv_model(2);
        let x = random_image(16, 16, 9);
        let a = m.eval_potential(&x).unwrap().reg_term;
        let b = m.eval_potential(&x.map(|v| v + 3.0)).unwrap().reg_term;
        assert!((a - b).abs() < 1e-10 * a);
    }

    #[test]
    fn data_term_vanishes_only_at_consistent_image() {
        let psf = PointSpreadFunction::gaussian(5, 1.0).unwrap();
        let truth = random_image(12, 12, 4);
        let y = crate::operators::convolve(&truth, &psf).unwrap();
        let m = PosteriorModel::l1_deconvolution(&psf, y, 0.5, 1.0).unwrap();
        assert!(m.eval_potential(&truth).unwrap().data_term < 1e-25);
        assert!(m.eval_potential(&random_image(12, 12, 5)).unwrap().data_term > 1e-3);
    }

    #[test]
    fn nonneg_violation_is_infinite() {
        let m = PosteriorModel::gen_gaussian(2, 2, 2.0, 1.0).unwrap().with_nonneg(true);
        let x: Image<f64> = Image::new(2, 2, vec![1.0, -0.1, 0.0, 2.0]).unwrap();
        let v = m.eval_potential(&x).unwrap();
        assert!(!v.feasible);
        assert!(v.total.is_infinite() && v.total > 0.0);
    }

    #[test]
    fn invalid_inputs() {
        let m = tv_model(1);
        assert!(m.eval_potential(&Image::zeros(8, 8)).is_err());
        let mut bad = Image::zeros(16, 16);
        bad.data_mut()[3] = f64::NAN;
        assert!(m.eval_potential(&bad).is_err());
        assert!(PosteriorModel::gen_gaussian(2, 2, 0.5, 1.0).is_err());
        assert!(PosteriorModel::l1_denoising(Image::zeros(2, 2), 0.0, 1.0).is_err());
        assert!(PosteriorModel::l1_denoising(Image::zeros(2, 2), 1.0, -1.0).is_err());
    }

    #[test]
    fn data_gradient_matches_finite_differences() {
        let m = tv_model(3);
        let x = random_image(16, 16, 11);
        let g = m.data_gradient(&x).unwrap();
        let mut ws = PotentialScratch::default();
        let h = 1e-6;
        for &i in &[0usize, 17, 100, 255] {
            let mut xp = x.clone();
            xp.data_mut()[i] += h;
            let mut xm = x.clone();
            xm.data_mut()[i] -= h;
            let fd = (m.potential_raw(xp.data(), &mut ws).data_term
                - m.potential_raw(xm.data(), &mut ws).data_term)
                / (2.0 * h);
            assert!((fd - g.data()[i]).abs() < 1e-5 * fd.abs().max(1.0), "{fd} vs {}", g.data()[i]);
        }
    }

    #[test]
    fn convexity_endpoints_and_coincident_points() {
        let m = tv_model(4);
        let x1 = random_image(16, 16, 1);
        let x2 = random_image(16, 16, 2);
        assert_eq!(log_concavity_gap_check(&m, &x1, &x2, 0.0).unwrap(), 0.0);
        assert_eq!(log_concavity_gap_check(&m, &x1, &x2, 1.0).unwrap(), 0.0);
        assert!(log_concavity_gap_check(&m, &x1, &x1, 0.3).unwrap().abs() < 1e-9);
        assert!(log_concavity_gap_check(&m, &x1, &x2, 1.5).is_err());
    }

    #[test]
    fn convexity_along_random_segments() {
        let psf = PointSpreadFunction::gaussian(3, 0.8).unwrap();
        let models = [
            tv_model(5),
            PosteriorModel::l1_deconvolution(&psf, random_image(16, 16, 6), 0.3, 1.5).unwrap(),
            PosteriorModel::gen_gaussian(16, 16, 1.5, 0.7).unwrap(),
        ];
        let mut rng = ChaCha8Rng::seed_from_u64(99);
        for m in &models {
            for trial in 0..100 {
                let x1 = random_image(16, 16, 1000 + trial).scaled(3.0);
                let x2 = random_image(16, 16, 5000 + trial);
                let t: f64 = rng.random_range(0.0..1.0);
                let gap = log_concavity_gap_check(m, &x1, &x2, t).unwrap();
                assert!(gap <= convexity_tolerance(m, &x1, &x2).unwrap(), "{:?} gap {gap}", m.kind());
            }
        }
    }
}
