//! Proximal operators, the inner solver for the prox of a full potential, and
//! the Moreau-envelope gradient used by the Langevin sampler.

use crate::admm::{self, SplitProblem, SplitState};
use crate::error::{invalid, Result, UqError};
use crate::image::{GradientField, Image};
use crate::model::{ModelKind, PosteriorModel};
use crate::operators::fft::FilterWork;
use crate::scalar::Real;

/// Settings for iteratively computed proximal maps.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ProxConfig<T> {
    pub inner_max_iters: usize,
    /// Relative fixed-point tolerance of the inner ADMM.
    pub inner_tol: T,
}

impl<T: Real> Default for ProxConfig<T> {
    fn default() -> Self {
        Self { inner_max_iters: 2000, inner_tol: T::lit(1e-6) }
    }
}

impl<T: Real> ProxConfig<T> {
    pub fn validate(&self) -> Result<()> {
        if self.inner_max_iters == 0 {
            return invalid("inner_max_iters must be at least 1");
        }
        if !(self.inner_tol > T::zero() && self.inner_tol < T::one()) {
            return invalid(format!("inner_tol must lie in (0, 1), got {}", self.inner_tol));
        }
        Ok(())
    }
}

fn check_step<T: Real>(t: T) -> Result<()> {
    if !(t > T::zero()) || !t.is_finite() {
        return invalid(format!("prox step must be positive and finite, got {t}"));
    }
    Ok(())
}

#[inline]
pub(crate) fn soft<T: Real>(v: T, t: T) -> T {
    if v > t {
        v - t
    } else if v < -t {
        v + t
    } else {
        T::zero()
    }
}

/// Soft-thresholding, the prox of `t‖·‖₁`.
pub fn prox_l1<T: Real>(v: &[T], t: T) -> Result<Vec<T>> {
    check_step(t)?;
    if v.iter().any(|x| !x.is_finite()) {
        return invalid("prox_l1 input contains non-finite values");
    }
    Ok(v.iter().map(|&x| soft(x, t)).collect())
}

/// Per-pixel shrinkage of the gradient vector: prox of `t‖·‖₁₋₂`.
pub(crate) fn shrink_l12_inplace<T: Real>(dx: &mut [T], dy: &mut [T], t: T) {
    for (a, b) in dx.iter_mut().zip(dy.iter_mut()) {
        let r = (*a * *a + *b * *b).sqrt();
        if r <= t {
            *a = T::zero();
            *b = T::zero();
        } else {
            let s = (r - t) / r;
            *a *= s;
            *b *= s;
        }
    }
}

/// Vector soft-threshold of each pixel's `(dx, dy)`; zero vectors stay zero.
pub fn prox_l12<T: Real>(field: &GradientField<T>, t: T) -> Result<GradientField<T>> {
    check_step(t)?;
    if !field.is_finite() {
        return invalid("prox_l12 input contains non-finite values");
    }
    let mut out = field.clone();
    shrink_l12_inplace(&mut out.dx, &mut out.dy, t);
    Ok(out)
}

/// Exact minimizer of `(t/2σ²)‖y − Ax‖² + ½‖x − v‖²`, solved in the Fourier domain.
pub fn prox_quadratic_data<T: Real>(model: &PosteriorModel<T>, v: &Image<T>, t: T) -> Result<Image<T>> {
    check_step(t)?;
    if model.kind() == ModelKind::GenGaussian {
        return invalid("prox_quadratic_data needs a model with a data term");
    }
    let (h, w) = model.shape();
    v.check_shape(h, w, "prox_quadratic_data")?;
    let a = t / (model.sigma() * model.sigma());
    let mut rhs: Vec<T> = v
        .data()
        .iter()
        .zip(model.adjoint_observation().data())
        .map(|(&vi, &yi)| vi + a * yi)
        .collect();
    admm::solve_diagonal(model, &mut rhs, |d| a * d + T::one());
    Ok(Image::from_vec_unchecked(h, w, rhs))
}

/// Scalar prox of `s·|u|^q` (`s > 0`, `q ≥ 1`).
pub(crate) fn prox_power<T: Real>(v: T, s: T, q: T) -> T {
    if q == T::one() {
        return soft(v, s);
    }
    let two = T::lit(2.0);
    if q == two {
        return v / (T::one() + two * s);
    }
    // root of s·q·u^{q−1} + u − |v| on [0, |v|]: monotone, bracketed Newton
    let target = v.abs();
    if target == T::zero() {
        return T::zero();
    }
    let (mut lo, mut hi) = (T::zero(), target);
    let mut u = target / (T::one() + s * q);
    for _ in 0..100 {
        let f = s * q * u.powf(q - T::one()) + u - target;
        if f > T::zero() {
            hi = u;
        } else {
            lo = u;
        }
        let df = s * q * (q - T::one()) * u.powf(q - two) + T::one();
        let mut next = u - f / df;
        if !(next > lo && next < hi) || !next.is_finite() {
            next = (lo + hi) / two;
        }
        if (next - u).abs() <= T::epsilon() * target * T::lit(4.0) {
            u = next;
            break;
        }
        u = next;
    }
    u.copysign(v)
}

/// Warm-startable inner solver for `argmin_u t·g(u) + ½‖u − v‖²`.
///
/// Keeps the scaled dual variables of the last solve so consecutive calls at
/// nearby points (as in a Markov chain) converge in a handful of iterations.
#[derive(Debug, Clone)]
pub struct ProxSolver<'m, T: Real> {
    model: &'m PosteriorModel<T>,
    cfg: ProxConfig<T>,
    warm: Option<SplitState<T>>,
    last_iterations: usize,
}

impl<'m, T: Real> ProxSolver<'m, T> {
    pub fn new(model: &'m PosteriorModel<T>, cfg: ProxConfig<T>) -> Result<Self> {
        cfg.validate()?;
        Ok(Self { model, cfg, warm: None, last_iterations: 0 })
    }

    pub fn model(&self) -> &PosteriorModel<T> {
        self.model
    }

    /// Inner iterations spent by the last call.
    pub fn last_iterations(&self) -> usize {
        self.last_iterations
    }

    pub fn prox(&mut self, v: &Image<T>, t: T) -> Result<Image<T>> {
        check_step(t)?;
        let (h, w) = self.model.shape();
        v.check_shape(h, w, "prox_full_potential")?;
        if !v.is_finite() {
            return invalid("prox argument contains non-finite values");
        }
        if self.model.kind() == ModelKind::GenGaussian {
            self.last_iterations = 0;
            return Ok(gen_gaussian_prox(self.model, v, t));
        }
        if let Some(out) = self.forward_backward(v, t)? {
            return Ok(out);
        }
        let problem = SplitProblem::proximal(self.model, v.data(), t);
        let mut state = problem.initial_state(v.data(), self.warm.take());
        let outcome = admm::run(
            &problem,
            &mut state,
            self.cfg.inner_max_iters,
            self.cfg.inner_tol,
            self.cfg.inner_tol,
            true,
            false,
        );
        self.last_iterations = outcome.iterations;
        let candidate = problem.solution(&state);
        if !outcome.converged {
            return Err(UqError::Convergence {
                solver: "inner prox ADMM",
                iterations: outcome.iterations,
                residual: outcome.primal.max(outcome.dual).as_f64(),
                last_iterate: candidate.iter().map(|x| x.as_f64()).collect(),
            });
        }
        self.warm = Some(state);
        // never return a point worse than the anchor itself
        let out = if problem.objective(&candidate) <= problem.objective(v.data()) {
            candidate
        } else {
            v.data().to_vec()
        };
        Ok(Image::from_vec_unchecked(h, w, out))
    }

    /// Proximal gradient for the ℓ1 models, used when it contracts by at
    /// least one half per iteration.
    ///
    /// The objective `½‖u − v‖² + (a/2)‖Au − y‖² + tλ‖u‖₁` with `a = t/σ²` is
    /// 1-strongly convex and its smooth part is `L`-smooth with
    /// `L = 1 + a·max|Â|²`, so each step shrinks the distance to the solution
    /// by `q = 1 − 1/L` and `‖u⁺ − u*‖ ≤ q/(1 − q)·‖u⁺ − u‖`.
    fn forward_backward(&mut self, v: &Image<T>, t: T) -> Result<Option<Image<T>>> {
        let m = self.model;
        if m.kind() == ModelKind::TvTomography || !m.has_data_term() {
            return Ok(None);
        }
        let a = t / (m.sigma() * m.sigma());
        let diag = m.normal_diagonal();
        let dmax = if m.identity_forward() { T::one() } else { diag.iter().copied().fold(T::zero(), T::max) };
        let lip = T::one() + a * dmax;
        let q = T::one() - T::one() / lip;
        let half = T::lit(0.5);
        if q > half {
            return Ok(None);
        }
        let step = T::one() / lip;
        let thr = step * t * m.lambda();
        let bound = q / (T::one() - q);
        let aty = m.adjoint_observation().data();
        let n = v.len();
        let mut u = v.data().to_vec();
        let mut normal = vec![T::zero(); n];
        let mut work = FilterWork::default();
        for it in 1..=self.cfg.inner_max_iters {
            normal.copy_from_slice(&u);
            if !m.identity_forward() {
                m.fft().filter_real(&mut normal, &mut work, |i, c| *c = *c * diag[i]);
            }
            let (mut d2, mut u2) = (T::zero(), T::zero());
            for i in 0..n {
                let grad = u[i] - v.data()[i] + a * (normal[i] - aty[i]);
                let z = u[i] - step * grad;
                let next = if m.nonneg() { (z - thr).max(T::zero()) } else { soft(z, thr) };
                d2 += (next - u[i]) * (next - u[i]);
                u2 += next * next;
                u[i] = next;
            }
            if bound * d2.sqrt() <= self.cfg.inner_tol * u2.sqrt().max(T::min_positive_value().sqrt()) {
                self.last_iterations = it;
                let (h, w) = m.shape();
                return Ok(Some(Image::from_vec_unchecked(h, w, u)));
            }
        }
        // slow contraction after all: let ADMM decide
        Ok(None)
    }

    /// `(x − prox_{λg}(x))/λ`, the gradient of the Moreau envelope of `g`.
    pub fn moreau_grad(&mut self, x: &Image<T>, mlambda: T) -> Result<Image<T>> {
        let p = self.prox(x, mlambda)?;
        Ok(x.lin_comb(T::one() / mlambda, &p, -T::one() / mlambda))
    }
}

fn gen_gaussian_prox<T: Real>(model: &PosteriorModel<T>, v: &Image<T>, t: T) -> Image<T> {
    let s = t * model.lambda();
    let q = model.exponent();
    let nonneg = model.nonneg();
    v.map(|x| {
        let u = prox_power(x, s, q);
        if nonneg {
            u.max(T::zero())
        } else {
            u
        }
    })
}

/// Approximate `argmin_u t·g_y(u) + ½‖u − v‖²` (inner ADMM warm-started at `v`).
pub fn prox_full_potential<T: Real>(
    model: &PosteriorModel<T>,
    v: &Image<T>,
    t: T,
    cfg: &ProxConfig<T>,
) -> Result<Image<T>> {
    ProxSolver::new(model, *cfg)?.prox(v, t)
}

/// Gradient of the Moreau envelope `g^λ` at `x`.
pub fn moreau_grad<T: Real>(
    model: &PosteriorModel<T>,
    x: &Image<T>,
    mlambda: T,
    cfg: &ProxConfig<T>,
) -> Result<Image<T>> {
    check_step(mlambda)?;
    ProxSolver::new(model, *cfg)?.moreau_grad(x, mlambda)
}
