//! Conservative HPD credible regions `{x : g(x) ≤ g(x_MAP) + n(τ_α + 1)}`,
//! membership tests and boundary sweeps.

use serde::{Deserialize, Serialize};

use crate::error::{invalid, Result, UqError};
use crate::image::Image;
use crate::model::PosteriorModel;
use crate::scalar::Real;

/// `τ_α = √(16 ln(3/α) / n)`.
pub fn tau_alpha(alpha: f64, n: usize) -> f64 {
    (16.0 * (3.0 / alpha).ln() / n as f64).sqrt()
}

/// `η_α = √(16 ln(3/α)) + √(1/α)`.
pub fn eta_alpha(alpha: f64) -> f64 {
    (16.0 * (3.0 / alpha).ln()).sqrt() + (1.0 / alpha).sqrt()
}

fn check_alpha(alpha: f64) -> Result<()> {
    if !(alpha > 0.0 && alpha < 1.0) {
        return invalid(format!("alpha must lie in (0, 1), got {alpha}"));
    }
    Ok(())
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CredibleRegion {
    pub alpha: f64,
    pub n: usize,
    pub g_at_map: f64,
    pub tau_alpha: f64,
    pub gamma_tilde: f64,
    /// `α > 4·exp(−n/3)`, the range where the containment guarantee is stated.
    pub alpha_valid: bool,
    /// `τ_α ≤ 2`, the range of the underlying concentration inequality.
    pub tau_in_range: bool,
}

impl CredibleRegion {
    /// Human-readable notes for the validity flags that are off.
    pub fn warnings(&self) -> Vec<String> {
        let mut out = Vec::new();
        if !self.alpha_valid {
            out.push(format!(
                "alpha = {} is not above 4·exp(-n/3) for n = {}; containment is not guaranteed",
                self.alpha, self.n
            ));
        }
        if !self.tau_in_range {
            out.push(format!(
                "tau_alpha = {:.4} exceeds 2; the concentration bound is applied outside its stated range",
                self.tau_alpha
            ));
        }
        out
    }
}

pub fn build_region(alpha: f64, n: usize, g_at_map: f64) -> Result<CredibleRegion> {
    check_alpha(alpha)?;
    if n == 0 {
        return invalid("dimension n must be at least 1");
    }
    if !g_at_map.is_finite() {
        return invalid(format!("g(x_MAP) must be finite, got {g_at_map}"));
    }
    let tau = tau_alpha(alpha, n);
    // exp(-n/3) underflows to 0 for large n, which correctly marks α valid
    let floor = 4.0 * (-(n as f64) / 3.0).exp();
    Ok(CredibleRegion {
        alpha,
        n,
        g_at_map,
        tau_alpha: tau,
        gamma_tilde: g_at_map + n as f64 * (tau + 1.0),
        alpha_valid: alpha > floor,
        tau_in_range: tau <= 2.0,
    })
}

/// Two-sided band `0 ≤ γ̃_α − γ_α ≤ η_α√n + n`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ErrorBand {
    pub eta_alpha: f64,
    pub lower: f64,
    pub upper: f64,
}

impl ErrorBand {
    pub fn contains(&self, gap: f64) -> bool {
        gap >= self.lower && gap <= self.upper
    }
}

pub fn error_band(alpha: f64, n: usize) -> Result<ErrorBand> {
    check_alpha(alpha)?;
    if n == 0 {
        return invalid("dimension n must be at least 1");
    }
    let eta = eta_alpha(alpha);
    Ok(ErrorBand { eta_alpha: eta, lower: 0.0, upper: eta * (n as f64).sqrt() + n as f64 })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TestOutcome {
    pub surrogate_g: f64,
    pub threshold: f64,
    pub rejected: bool,
    pub alpha: f64,
    pub margin: f64,
    pub verdict: String,
}

impl TestOutcome {
    fn from_value(region: &CredibleRegion, g: f64) -> Self {
        // ties count as members; +inf (infeasible) is always rejected
        let rejected = !(g <= region.gamma_tilde);
        let verdict = if rejected {
            format!("reject at {:.4} confidence", 1.0 - region.alpha)
        } else {
            "fail to reject".to_string()
        };
        Self {
            surrogate_g: g,
            threshold: region.gamma_tilde,
            rejected,
            alpha: region.alpha,
            margin: g - region.gamma_tilde,
            verdict,
        }
    }
}

fn check_region_model<T: Real>(region: &CredibleRegion, model: &PosteriorModel<T>) -> Result<()> {
    if region.n != model.n() {
        return invalid(format!("region built for n = {} but the model has n = {}", region.n, model.n()));
    }
    Ok(())
}

/// Tests `g(x) ≤ γ̃`.
pub fn is_member<T: Real>(region: &CredibleRegion, model: &PosteriorModel<T>, x: &Image<T>) -> Result<TestOutcome> {
    check_region_model(region, model)?;
    let g = model.eval_potential(x)?.total.as_f64();
    if g.is_nan() {
        return Err(UqError::Numeric("potential evaluated to NaN".into()));
    }
    Ok(TestOutcome::from_value(region, g))
}

/// Knockout hypothesis test: rejecting means the removed structure is
/// supported by the data at level `1 − α`.
///
/// The region is `n`-dimensional, so a test about a handful of pixels is
/// conservative and tends to overstate uncertainty.
pub fn knockout_test<T: Real>(
    region: &CredibleRegion,
    model: &PosteriorModel<T>,
    surrogate: &Image<T>,
) -> Result<TestOutcome> {
    is_member(region, model, surrogate)
}

/// Classifies a precomputed potential value against the region.
pub fn classify(region: &CredibleRegion, g: f64) -> TestOutcome {
    TestOutcome::from_value(region, g)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SweepConfig {
    pub tol: f64,
    pub max_steps: usize,
}

impl Default for SweepConfig {
    fn default() -> Self {
        Self { tol: 1e-3, max_steps: 60 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepResult {
    pub parameter_name: String,
    pub lower_bound: f64,
    pub upper_bound: f64,
    pub evaluations: usize,
    pub boundary_tolerance: f64,
}

/// Bisects from `theta0` towards `lo` and `hi` for the last parameter value
/// whose surrogate stays in the region.
pub fn scalar_sweep<T, F>(
    region: &CredibleRegion,
    model: &PosteriorModel<T>,
    parameter_name: &str,
    family: F,
    theta0: f64,
    lo: f64,
    hi: f64,
    cfg: SweepConfig,
) -> Result<SweepResult>
where
    T: Real,
    F: Fn(f64) -> Result<Image<T>> + Sync,
{
    check_region_model(region, model)?;
    if !(lo <= theta0 && theta0 <= hi) || !lo.is_finite() || !hi.is_finite() {
        return invalid(format!("sweep start {theta0} outside [{lo}, {hi}]"));
    }
    if !(cfg.tol > 0.0) || cfg.max_steps == 0 {
        return invalid("sweep tolerance and step budget must be positive");
    }
    let inside = |theta: f64| -> Result<bool> { Ok(!is_member(region, model, &family(theta)?)?.rejected) };
    if !inside(theta0)? {
        return invalid(format!("surrogate at the start value {theta0} is already outside the region"));
    }
    let (down, up) = rayon::join(
        || bisect_towards(&inside, theta0, lo, cfg),
        || bisect_towards(&inside, theta0, hi, cfg),
    );
    let (lower_bound, e1) = down?;
    let (upper_bound, e2) = up?;
    Ok(SweepResult {
        parameter_name: parameter_name.to_string(),
        lower_bound,
        upper_bound,
        evaluations: 1 + e1 + e2,
        boundary_tolerance: cfg.tol,
    })
}

fn bisect_towards(
    inside: &(impl Fn(f64) -> Result<bool> + Sync),
    start: f64,
    limit: f64,
    cfg: SweepConfig,
) -> Result<(f64, usize)> {
    let mut evals = 1;
    if inside(limit)? {
        return Ok((limit, evals));
    }
    let (mut a, mut b) = (start, limit);
    let mut steps = 0;
    while (b - a).abs() > cfg.tol && steps < cfg.max_steps {
        let m = 0.5 * (a + b);
        evals += 1;
        if inside(m)? {
            a = m;
        } else {
            b = m;
        }
        steps += 1;
    }
    // the point one tolerance past the bound must be outside
    let probe = if limit > start { (a + cfg.tol).min(limit) } else { (a - cfg.tol).max(limit) };
    evals += 1;
    if probe != a && inside(probe)? {
        return Err(UqError::DegenerateSweep(format!(
            "membership is not monotone: {probe} is inside although {b} is outside"
        )));
    }
    Ok((a, evals))
}
