//! ADMM engine for `min (a/2)‖y − Ax‖² + (c/2)‖x − v‖² + μ R(Bx) [+ ι₊(x)]`.
//!
//! `A` is diagonal in the Fourier domain (masked DFT or periodic blur) and so
//! is `BᵀB` (periodic gradient, identity), which makes the x-update an exact
//! pointwise division between two FFTs. The objective is pre-divided by the
//! weight of its quadratic part so that ρ ≈ 1 is a sensible scale.

use crate::model::{ModelKind, PosteriorModel, PotentialScratch};
use crate::operators::gradient::{div2_into, grad2_into};
use crate::operators::fft::FilterWork;
use crate::operators::laplacian_eigenvalues;
use crate::prox::{shrink_l12_inplace, soft};
use crate::scalar::Real;

/// Multiplies by `1/den(d)` in the Fourier domain, where `d` is the diagonal
/// of `AᵀA`. The identity forward operator skips the transforms.
pub(crate) fn solve_diagonal<T: Real>(model: &PosteriorModel<T>, rhs: &mut [T], den: impl Fn(T) -> T) {
    if model.identity_forward() {
        let k = den(T::one());
        rhs.iter_mut().for_each(|v| *v /= k);
        return;
    }
    let diag = model.normal_diagonal();
    model.fft().filter_real(rhs, &mut FilterWork::default(), |i, s| *s = *s / den(diag[i]));
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub(crate) enum IdentityBlock {
    Absent,
    /// `z = x` carrying the ℓ1 term (plus the orthant when constrained).
    L1 { nonneg: bool },
    /// `z = x` carrying only the orthant indicator.
    Positivity,
}

pub(crate) struct SplitProblem<'a, T: Real> {
    model: &'a PosteriorModel<T>,
    /// Divisor applied to the raw objective.
    scale: T,
    data_w: T,
    anchor: Option<(&'a [T], T)>,
    reg_w: T,
    grad_block: bool,
    id_block: IdentityBlock,
    /// Prox step `t`; `None` for the MAP problem.
    step: Option<T>,
}

#[derive(Debug, Clone)]
pub(crate) struct SplitState<T> {
    pub x: Vec<T>,
    pub zg: Vec<T>,
    pub dg: Vec<T>,
    pub zp: Vec<T>,
    pub dp: Vec<T>,
    pub rho: T,
}

#[derive(Debug, Clone)]
pub(crate) struct Outcome<T> {
    pub iterations: usize,
    pub primal: T,
    pub dual: T,
    pub converged: bool,
    pub trace: Option<Vec<T>>,
}

const ADAPT_EVERY: usize = 50;

impl<'a, T: Real> SplitProblem<'a, T> {
    fn blocks(model: &PosteriorModel<T>) -> (bool, IdentityBlock) {
        match model.kind() {
            ModelKind::TvTomography => (
                true,
                if model.nonneg() { IdentityBlock::Positivity } else { IdentityBlock::Absent },
            ),
            _ => (false, IdentityBlock::L1 { nonneg: model.nonneg() }),
        }
    }

    /// `argmin g_y`.
    pub fn map(model: &'a PosteriorModel<T>) -> Self {
        let (grad_block, id_block) = Self::blocks(model);
        let inv_s2 = T::one() / (model.sigma() * model.sigma());
        Self {
            model,
            scale: inv_s2,
            data_w: T::one(),
            anchor: None,
            reg_w: model.lambda() / inv_s2,
            grad_block,
            id_block,
            step: None,
        }
    }

    /// `argmin_u t·g_y(u) + ½‖u − v‖²`.
    pub fn proximal(model: &'a PosteriorModel<T>, v: &'a [T], t: T) -> Self {
        let (grad_block, id_block) = Self::blocks(model);
        let a = t / (model.sigma() * model.sigma());
        let s = a + T::one();
        Self {
            model,
            scale: s,
            data_w: a / s,
            anchor: Some((v, T::one() / s)),
            reg_w: t * model.lambda() / s,
            grad_block,
            id_block,
            step: Some(t),
        }
    }

    pub fn scale(&self) -> T {
        self.scale
    }

    pub fn initial_state(&self, x0: &[T], warm: Option<SplitState<T>>) -> SplitState<T> {
        let n = x0.len();
        let (h, w) = self.model.shape();
        let mut zg = Vec::new();
        if self.grad_block {
            zg = vec![T::zero(); 2 * n];
            let (a, b) = zg.split_at_mut(n);
            grad2_into(x0, h, w, a, b);
        }
        let zp = if self.id_block != IdentityBlock::Absent { x0.to_vec() } else { Vec::new() };
        let (dg, dp, rho) = match warm {
            Some(s) if s.dg.len() == zg.len() && s.dp.len() == zp.len() => (s.dg, s.dp, s.rho),
            _ => (vec![T::zero(); zg.len()], vec![T::zero(); zp.len()], T::one()),
        };
        SplitState { x: x0.to_vec(), zg, dg, zp, dp, rho }
    }

    fn denominator(&self, rho: T) -> (Option<Vec<T>>, T) {
        let c = self.anchor.map(|a| a.1).unwrap_or(T::zero());
        let id = if self.id_block != IdentityBlock::Absent { rho } else { T::zero() };
        let a = if self.model.has_data_term() { self.data_w } else { T::zero() };
        if !self.grad_block && (self.model.identity_forward() || !self.model.has_data_term()) {
            return (None, a + c + id);
        }
        let (h, w) = self.model.shape();
        let lap = if self.grad_block { laplacian_eigenvalues::<T>(h, w) } else { vec![T::zero(); h * w] };
        let den = self
            .model
            .normal_diagonal()
            .iter()
            .zip(&lap)
            .map(|(&d, &l)| a * d + c + id + rho * l)
            .collect();
        (Some(den), T::zero())
    }

    /// Objective in raw (unscaled) units.
    pub fn objective(&self, x: &[T]) -> T {
        let g = self.model.potential_raw(x, &mut PotentialScratch::default()).total;
        match (self.step, self.anchor) {
            (Some(t), Some((v, _))) => {
                let d2: T = x.iter().zip(v).map(|(&a, &b)| (a - b) * (a - b)).sum();
                t * g + T::lit(0.5) * d2
            }
            _ => g,
        }
    }

    /// Point returned to callers: the sparse split copy for ℓ1, the
    /// orthant-projected primal for constrained TV, else the primal.
    pub fn solution(&self, state: &SplitState<T>) -> Vec<T> {
        match self.id_block {
            IdentityBlock::L1 { .. } => state.zp.clone(),
            IdentityBlock::Positivity => state.x.iter().map(|&v| v.max(T::zero())).collect(),
            IdentityBlock::Absent => state.x.clone(),
        }
    }
}

fn norm<T: Real>(v: &[T]) -> T {
    v.iter().map(|&x| x * x).sum::<T>().sqrt()
}

/// Runs ADMM from `state` until both relative residuals fall below tolerance.
pub(crate) fn run<T: Real>(
    problem: &SplitProblem<'_, T>,
    state: &mut SplitState<T>,
    max_iters: usize,
    tol_primal: T,
    tol_dual: T,
    adapt: bool,
    record_trace: bool,
) -> Outcome<T> {
    let model = problem.model;
    let (h, w) = model.shape();
    let n = h * w;
    let two = T::lit(2.0);
    let ten = T::lit(10.0);

    // constant part of the x-update right-hand side
    let mut b0 = vec![T::zero(); n];
    if model.has_data_term() {
        for (b, &ay) in b0.iter_mut().zip(model.adjoint_observation().data()) {
            *b = problem.data_w * ay;
        }
    }
    if let Some((v, c)) = problem.anchor {
        for (b, &vi) in b0.iter_mut().zip(v) {
            *b += c * vi;
        }
    }
    let floor = (norm(&b0) * T::lit(1e-3)).max(T::min_positive_value().sqrt());

    let (mut den, mut den_scalar) = problem.denominator(state.rho);
    let fft = model.fft();
    let mut work = FilterWork::default();
    let mut rhs = vec![T::zero(); n];
    let mut tmp = vec![T::zero(); 2 * n];
    let mut bt = vec![T::zero(); n];
    let mut zg_old = vec![T::zero(); state.zg.len()];
    let mut zp_old = vec![T::zero(); state.zp.len()];
    let mut scratch_n = vec![T::zero(); n];
    let mut trace = if record_trace { Some(Vec::new()) } else { None };
    let mut scratch = PotentialScratch::default();

    let mut primal = T::infinity();
    let mut dual = T::infinity();
    for it in 1..=max_iters {
        let rho = state.rho;
        // x-update
        rhs.copy_from_slice(&b0);
        if problem.grad_block {
            for i in 0..2 * n {
                tmp[i] = state.zg[i] - state.dg[i];
            }
            let (a, b) = tmp.split_at(n);
            div2_into(a, b, h, w, &mut bt);
            for (r, &d) in rhs.iter_mut().zip(&bt) {
                *r -= rho * d;
            }
        }
        if problem.id_block != IdentityBlock::Absent {
            for ((r, &z), &d) in rhs.iter_mut().zip(&state.zp).zip(&state.dp) {
                *r += rho * (z - d);
            }
        }
        match &den {
            None => {
                for (x, &r) in state.x.iter_mut().zip(&rhs) {
                    *x = r / den_scalar;
                }
            }
            Some(den) => {
                state.x.copy_from_slice(&rhs);
                fft.filter_real(&mut state.x, &mut work, |i, s| *s = *s / den[i]);
            }
        }

        // z-update and dual ascent
        let mut r2 = T::zero();
        let mut bx2 = T::zero();
        let mut z2 = T::zero();
        if problem.grad_block {
            zg_old.copy_from_slice(&state.zg);
            let (gx, gy) = tmp.split_at_mut(n);
            grad2_into(&state.x, h, w, gx, gy);
            for i in 0..2 * n {
                state.zg[i] = tmp[i] + state.dg[i];
            }
            let (zx, zy) = state.zg.split_at_mut(n);
            shrink_l12_inplace(zx, zy, problem.reg_w / rho);
            for i in 0..2 * n {
                let r = tmp[i] - state.zg[i];
                state.dg[i] += r;
                r2 += r * r;
                bx2 += tmp[i] * tmp[i];
                z2 += state.zg[i] * state.zg[i];
            }
        }
        if problem.id_block != IdentityBlock::Absent {
            zp_old.copy_from_slice(&state.zp);
            let thr = problem.reg_w / rho;
            for i in 0..n {
                let v = state.x[i] + state.dp[i];
                state.zp[i] = match problem.id_block {
                    IdentityBlock::L1 { nonneg: false } => soft(v, thr),
                    IdentityBlock::L1 { nonneg: true } => (v - thr).max(T::zero()),
                    _ => v.max(T::zero()),
                };
                let r = state.x[i] - state.zp[i];
                state.dp[i] += r;
                r2 += r * r;
                bx2 += state.x[i] * state.x[i];
                z2 += state.zp[i] * state.zp[i];
            }
        }

        primal = r2.sqrt() / bx2.sqrt().max(z2.sqrt()).max(floor);

        // dual residual ρ‖Bᵀ(z − z_old)‖ relative to ρ‖Bᵀd‖; it costs two
        // extra divergences, so it is only formed when it can matter
        let adapt_now = adapt && it % ADAPT_EVERY == 0;
        if primal <= tol_primal || adapt_now || it == max_iters {
            let bt_norm = |a: &[T], b: &[T], out: &mut [T], tmp: &mut [T]| -> T {
                out.iter_mut().for_each(|v| *v = T::zero());
                if problem.grad_block {
                    let (ax, ay) = a.split_at(n);
                    div2_into(ax, ay, h, w, tmp);
                    for (o, &t) in out.iter_mut().zip(tmp.iter()) {
                        *o -= t;
                    }
                }
                if problem.id_block != IdentityBlock::Absent {
                    for (o, &v) in out.iter_mut().zip(b) {
                        *o += v;
                    }
                }
                norm(out)
            };
            for (d, &z) in zg_old.iter_mut().zip(&state.zg) {
                *d = z - *d;
            }
            for (d, &z) in zp_old.iter_mut().zip(&state.zp) {
                *d = z - *d;
            }
            let s_abs = rho * bt_norm(&zg_old, &zp_old, &mut rhs, &mut scratch_n);
            let d_scale = rho * bt_norm(&state.dg, &state.dp, &mut rhs, &mut scratch_n);
            dual = s_abs / d_scale.max(floor);
        } else {
            dual = T::infinity();
        }

        if let Some(tr) = trace.as_mut() {
            tr.push(model.potential_raw(&problem.solution(state), &mut scratch).total);
        }

        if primal <= tol_primal && dual <= tol_dual {
            return Outcome { iterations: it, primal, dual, converged: true, trace };
        }

        if adapt_now {
            let factor = if primal > ten * dual {
                Some(two)
            } else if dual > ten * primal {
                Some(T::one() / two)
            } else {
                None
            };
            if let Some(f) = factor {
                state.rho = state.rho * f;
                state.dg.iter_mut().chain(state.dp.iter_mut()).for_each(|d| *d /= f);
                let (d, s) = problem.denominator(state.rho);
                den = d;
                den_scalar = s;
            }
        }
    }
    Outcome { iterations: max_iters, primal, dual, converged: false, trace }
}

