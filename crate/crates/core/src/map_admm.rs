//! MAP estimation by ADMM with variable splitting.

use std::time::Instant;

use crate::admm::{self, SplitProblem};
use crate::error::{invalid, Result, UqError};
use crate::image::Image;
use crate::model::{ModelKind, PosteriorModel, PotentialScratch, PotentialValue};
use crate::operators::gradient::div2_into;
use crate::scalar::Real;

#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct AdmmConfig<T> {
    pub rho: T,
    pub max_iters: usize,
    pub tol_primal: T,
    pub tol_dual: T,
    pub record_trace: bool,
    /// Residual balancing (ρ doubled or halved every 50 iterations). Each
    /// change of ρ perturbs the iterate, but a fixed ρ stalls whenever λσ²
    /// is far from 1.
    pub adapt_rho: bool,
}

impl<T: Real> Default for AdmmConfig<T> {
    fn default() -> Self {
        Self {
            rho: T::one(),
            max_iters: 5000,
            tol_primal: T::lit(1e-6),
            tol_dual: T::lit(1e-6),
            record_trace: false,
            adapt_rho: true,
        }
    }
}

impl<T: Real> AdmmConfig<T> {
    pub fn validate(&self) -> Result<()> {
        if !(self.rho > T::zero()) || !self.rho.is_finite() {
            return invalid(format!("rho must be positive, got {}", self.rho));
        }
        if self.max_iters == 0 {
            return invalid("max_iters must be at least 1");
        }
        for (name, t) in [("tol_primal", self.tol_primal), ("tol_dual", self.tol_dual)] {
            if !(t > T::zero() && t < T::one()) {
                return invalid(format!("{name} must lie in (0, 1), got {t}"));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone)]
pub struct SolveReport<T: Real> {
    pub x_map: Image<T>,
    pub g_at_map: PotentialValue<T>,
    pub iterations: usize,
    pub primal_residual: T,
    pub dual_residual: T,
    pub objective_trace: Option<Vec<T>>,
    pub wall_time_seconds: f64,
    pub converged: bool,
    /// Final penalty weight (after any balancing).
    pub rho: T,
    pub tol_primal: T,
    pub tol_dual: T,
    /// Lagrange multiplier of the gradient split (dx block then dy block), empty if absent.
    pub multiplier_grad: Vec<T>,
    /// Lagrange multiplier of the identity split, empty if absent.
    pub multiplier_id: Vec<T>,
}

/// Runs the solver and returns its report whether or not it converged.
pub fn run_map_solver<T: Real>(
    model: &PosteriorModel<T>,
    cfg: &AdmmConfig<T>,
    x0: Option<&Image<T>>,
) -> Result<SolveReport<T>> {
    cfg.validate()?;
    let (h, w) = model.shape();
    let start = match x0 {
        Some(x) => {
            x.check_shape(h, w, "solve_map x0")?;
            if !x.is_finite() {
                return invalid("x0 contains non-finite values");
            }
            x.clone()
        }
        None => model.adjoint_observation().clone(),
    };
    let clock = Instant::now();
    let mut scratch = PotentialScratch::default();

    if model.kind() == ModelKind::GenGaussian {
        let x_map = Image::zeros(h, w);
        let g = model.potential_raw(x_map.data(), &mut scratch);
        return Ok(SolveReport {
            x_map,
            g_at_map: g,
            iterations: 0,
            primal_residual: T::zero(),
            dual_residual: T::zero(),
            objective_trace: cfg.record_trace.then(Vec::new),
            wall_time_seconds: clock.elapsed().as_secs_f64(),
            converged: true,
            rho: cfg.rho,
            tol_primal: cfg.tol_primal,
            tol_dual: cfg.tol_dual,
            multiplier_grad: Vec::new(),
            multiplier_id: Vec::new(),
        });
    }

    let problem = SplitProblem::map(model);
    let mut state = problem.initial_state(start.data(), None);
    state.rho = cfg.rho;
    let outcome = admm::run(
        &problem,
        &mut state,
        cfg.max_iters,
        cfg.tol_primal,
        cfg.tol_dual,
        cfg.adapt_rho,
        cfg.record_trace,
    );
    let x = problem.solution(&state);
    let g = model.potential_raw(&x, &mut scratch);
    if !g.total.is_finite() {
        return Err(UqError::Numeric(format!("potential at the ADMM output is {}", g.total)));
    }
    let k = problem.scale() * state.rho;
    Ok(SolveReport {
        x_map: Image::from_vec_unchecked(h, w, x),
        g_at_map: g,
        iterations: outcome.iterations,
        primal_residual: outcome.primal,
        dual_residual: outcome.dual,
        objective_trace: outcome.trace,
        wall_time_seconds: clock.elapsed().as_secs_f64(),
        converged: outcome.converged,
        rho: state.rho,
        tol_primal: cfg.tol_primal,
        tol_dual: cfg.tol_dual,
        multiplier_grad: state.dg.iter().map(|&d| k * d).collect(),
        multiplier_id: state.dp.iter().map(|&d| k * d).collect(),
    })
}

/// `x_MAP = argmin g_y(x)`. Fails with a convergence error when `max_iters`
/// is exhausted.
pub fn solve_map<T: Real>(
    model: &PosteriorModel<T>,
    cfg: &AdmmConfig<T>,
    x0: Option<&Image<T>>,
) -> Result<SolveReport<T>> {
    let report = run_map_solver(model, cfg, x0)?;
    if !report.converged {
        return Err(UqError::Convergence {
            solver: "MAP ADMM",
            iterations: report.iterations,
            residual: report.primal_residual.max(report.dual_residual).as_f64(),
            last_iterate: report.x_map.data().iter().map(|v| v.as_f64()).collect(),
        });
    }
    Ok(report)
}

/// Relative stationarity defect `‖∇D(x) + Bᵀp‖ / (1 + ‖∇D(x)‖ + ‖Bᵀp‖)`
/// with `p` the multipliers carried by the report.
pub fn kkt_check<T: Real>(model: &PosteriorModel<T>, report: &SolveReport<T>) -> T {
    if model.kind() == ModelKind::GenGaussian {
        return T::zero();
    }
    let (h, w) = model.shape();
    let n = h * w;
    let grad = if model.has_data_term() {
        match model.data_gradient(&report.x_map) {
            Ok(g) => g.into_data(),
            Err(_) => return T::infinity(),
        }
    } else {
        vec![T::zero(); n]
    };
    let mut btp = vec![T::zero(); n];
    if report.multiplier_grad.len() == 2 * n {
        let (px, py) = report.multiplier_grad.split_at(n);
        div2_into(px, py, h, w, &mut btp);
        btp.iter_mut().for_each(|v| *v = -*v);
    }
    if report.multiplier_id.len() == n {
        for (b, &p) in btp.iter_mut().zip(&report.multiplier_id) {
            *b += p;
        }
    }
    let norm = |v: &[T]| v.iter().map(|&x| x * x).sum::<T>().sqrt();
    let defect: Vec<T> = grad.iter().zip(&btp).map(|(&a, &b)| a + b).collect();
    let value = norm(&defect) / (T::one() + norm(&grad) + norm(&btp));
    if value.is_finite() {
        value
    } else {
        T::infinity()
    }
}

/// Acceptance level for [`kkt_check`]: `10·tol_dual·(1 + ‖x_map‖)`.
pub fn kkt_threshold<T: Real>(report: &SolveReport<T>) -> T {
    T::lit(10.0) * report.tol_dual * (T::one() + report.x_map.norm())
}
