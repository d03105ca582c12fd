//! Closed-form thresholds for the iid generalized-Gaussian family
//! `p(x) ∝ exp(−λ Σ|xᵢ|^q)`, whose potential is Gamma(n/q, 1) distributed.

use std::io::Write;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Exp1, Gamma, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Result, UqError};
use crate::region::tau_alpha;
use crate::special::gamma_upper_quantile;
use crate::stats::{estimate_quantile, QuantileEstimate, DEFAULT_BATCHES};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GenGaussianModel {
    pub q: f64,
    pub lam: f64,
    pub n: usize,
}

impl GenGaussianModel {
    pub fn new(q: f64, lam: f64, n: usize) -> Result<Self> {
        if !(q >= 1.0) || !q.is_finite() {
            return invalid(format!("exponent q must be at least 1, got {q}"));
        }
        if !(lam > 0.0) || !lam.is_finite() {
            return invalid(format!("scale lambda must be positive, got {lam}"));
        }
        if n == 0 {
            return invalid("dimension n must be at least 1");
        }
        Ok(Self { q, lam, n })
    }

    /// Shape of the Gamma law of the potential.
    pub fn shape(&self) -> f64 {
        self.n as f64 / self.q
    }

    /// `λ Σ|xᵢ|^q`.
    pub fn potential(&self, x: &[f64]) -> f64 {
        self.lam * x.iter().map(|v| v.abs().powf(self.q)).sum::<f64>()
    }

    /// One iid draw from the density.
    pub fn sample<R: Rng>(&self, rng: &mut R, out: &mut [f64]) {
        let q = self.q;
        let gamma = Gamma::new(1.0 / q, 1.0).expect("valid shape");
        for v in out.iter_mut() {
            let mag = if q == 1.0 {
                let e: f64 = Exp1.sample(rng);
                e / self.lam
            } else if q == 2.0 {
                let z: f64 = StandardNormal.sample(rng);
                z.abs() / (2.0 * self.lam).sqrt()
            } else {
                let g: f64 = gamma.sample(rng);
                (g / self.lam).powf(1.0 / q)
            };
            *v = if rng.random::<bool>() { mag } else { -mag };
        }
    }
}

/// Exact HPD threshold `γ_α`: the `(1 − α)`-quantile of Gamma(n/q, 1).
pub fn exact_gamma(model: &GenGaussianModel, alpha: f64) -> Result<f64> {
    if !(alpha > 0.0 && alpha < 1.0) {
        return invalid(format!("alpha must lie in (0, 1), got {alpha}"));
    }
    gamma_upper_quantile(model.shape(), alpha)
}

/// Monte Carlo estimate of `γ_α` from iid draws.
pub fn mc_gamma(model: &GenGaussianModel, alpha: f64, samples: usize, seed: u64) -> Result<QuantileEstimate> {
    if samples < 1000 {
        return invalid(format!("need at least 1000 samples, got {samples}"));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut x = vec![0.0; model.n];
    let g: Vec<f64> = (0..samples)
        .map(|_| {
            model.sample(&mut rng, &mut x);
            model.potential(&x)
        })
        .collect();
    let mut est = estimate_quantile(&g, alpha, DEFAULT_BATCHES)?;
    est.method = format!("iid draws; {}", est.method);
    Ok(est)
}

/// `lim (γ̃ − γ)/n = 1 − 1/q`.
pub fn asymptotic_limit(q: f64) -> Result<f64> {
    if !(q >= 1.0) || !q.is_finite() {
        return invalid(format!("exponent q must be at least 1, got {q}"));
    }
    Ok(1.0 - 1.0 / q)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ErrorCurvePoint {
    pub n: usize,
    pub alpha: f64,
    pub gamma_exact: f64,
    pub gamma_tilde: f64,
    pub e_n: f64,
    pub limit: f64,
}

/// `{1, 2, 5, 10, 20, 50, …}` up to and including `nmax`.
pub fn log_n_grid(nmax: usize) -> Vec<usize> {
    let mut out = Vec::new();
    let mut decade = 1usize;
    'outer: loop {
        for m in [1, 2, 5] {
            let n = m * decade;
            if n > nmax {
                break 'outer;
            }
            out.push(n);
        }
        decade = match decade.checked_mul(10) {
            Some(d) => d,
            None => break,
        };
    }
    if out.last() != Some(&nmax) && nmax > 0 {
        out.push(nmax);
    }
    out
}

/// `e(n) = (γ̃ − γ)/n` on an `(n, α)` grid, with `g(x_MAP) = 0`.
pub fn error_curve(q: f64, lam: f64, n_grid: &[usize], alphas: &[f64]) -> Result<Vec<ErrorCurvePoint>> {
    if n_grid.is_empty() || alphas.is_empty() {
        return invalid("empty n grid or alpha list");
    }
    if n_grid.windows(2).any(|w| w[0] >= w[1]) || n_grid[0] == 0 {
        return invalid("n grid must be positive and strictly increasing");
    }
    let limit = asymptotic_limit(q)?;
    let jobs: Vec<(f64, usize)> = alphas.iter().flat_map(|&a| n_grid.iter().map(move |&n| (a, n))).collect();
    jobs.par_iter()
        .map(|&(alpha, n)| {
            let model = GenGaussianModel::new(q, lam, n)?;
            let gamma_exact = exact_gamma(&model, alpha)?;
            let gamma_tilde = n as f64 * (tau_alpha(alpha, n) + 1.0);
            Ok(ErrorCurvePoint {
                n,
                alpha,
                gamma_exact,
                gamma_tilde,
                e_n: (gamma_tilde - gamma_exact) / n as f64,
                limit,
            })
        })
        .collect()
}

pub fn write_curve_csv<W: Write>(points: &[ErrorCurvePoint], mut out: W) -> Result<()> {
    writeln!(out, "n,alpha,gamma_exact,gamma_tilde,e_n,limit")?;
    for p in points {
        writeln!(out, "{},{},{},{},{},{}", p.n, p.alpha, p.gamma_exact, p.gamma_tilde, p.e_n, p.limit)?;
    }
    Ok(())
}

/// `3·exp(−τ²n/16)`, the tail bound on `P(|g − E g| ≥ τn)`.
pub fn concentration_bound(tau: f64, n: usize) -> f64 {
    3.0 * (-tau * tau * n as f64 / 16.0).exp()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ConcentrationCheck {
    pub n: usize,
    pub tau: f64,
    pub fraction: f64,
    pub bound: f64,
    /// Three binomial standard errors at the bound, using the effective size.
    pub allowance: f64,
    pub ok: bool,
}

/// Fraction of samples with `|g − mean| ≥ τn` against the concentration bound.
pub fn concentration_check(g: &[f64], n: usize, tau: f64, effective_size: f64) -> Result<ConcentrationCheck> {
    if g.is_empty() || !(effective_size >= 1.0) {
        return invalid("concentration check needs samples and a positive effective size");
    }
    if !(0.0..=2.0).contains(&tau) {
        return invalid(format!("tau must lie in [0, 2], got {tau}"));
    }
    let m = crate::stats::mean(g);
    let thr = tau * n as f64;
    let hits = g.iter().filter(|&&v| (v - m).abs() >= thr).count();
    let fraction = hits as f64 / g.len() as f64;
    let bound = concentration_bound(tau, n);
    let b = bound.min(1.0);
    let allowance = 3.0 * (b * (1.0 - b) / effective_size).sqrt();
    if !fraction.is_finite() {
        return Err(UqError::Numeric("non-finite tail fraction".into()));
    }
    Ok(ConcentrationCheck { n, tau, fraction, bound, allowance, ok: fraction <= bound + allowance })
}

#[cfg(test)]
mod tests {
    use super::*;
    use statrs::distribution::{ContinuousCDF, Gamma as GammaOracle};

    #[test]
    fn model_validation() {
        assert!(GenGaussianModel::new(0.5, 1.0, 3).is_err());
        assert!(GenGaussianModel::new(1.0, 0.0, 3).is_err());
        assert!(GenGaussianModel::new(1.0, 1.0, 0).is_err());
        assert_eq!(GenGaussianModel::new(2.0, 3.0, 10).unwrap().shape(), 5.0);
    }

    #[test]
    fn small_dimension_thresholds() {
        let m = |q, n| GenGaussianModel::new(q, 1.0, n).unwrap();
        assert!((exact_gamma(&m(1.0, 1), 0.05).unwrap() - 20f64.ln()).abs() < 1e-9);
        assert!((exact_gamma(&m(1.0, 2), 0.05).unwrap() - 4.7439).abs() < 1e-4);
        assert!((exact_gamma(&m(2.0, 1), 0.05).unwrap() - 1.9207).abs() < 1e-4);
        assert!(exact_gamma(&m(1.0, 1), 1.0).is_err());
    }

    #[test]
    fn threshold_does_not_depend_on_scale() {
        let a = exact_gamma(&GenGaussianModel::new(1.5, 0.1, 40).unwrap(), 0.1).unwrap();
        let b = exact_gamma(&GenGaussianModel::new(1.5, 7.0, 40).unwrap(), 0.1).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn monotone_in_n_and_alpha() {
        let g = |n, a| exact_gamma(&GenGaussianModel::new(2.0, 1.0, n).unwrap(), a).unwrap();
        for n in [1, 10, 100, 1000] {
            assert!(g(n + 1, 0.1) > g(n, 0.1));
            assert!(g(n, 0.05) > g(n, 0.1));
        }
    }

    #[test]
    fn sampler_moments() {
        // E|x|^q = 1/(qλ) per coordinate
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        for q in [1.0, 1.5, 2.0, 4.0] {
            let m = GenGaussianModel::new(q, 2.0, 50_000).unwrap();
            let mut x = vec![0.0; m.n];
            m.sample(&mut rng, &mut x);
            let g = m.potential(&x);
            // g ~ Gamma(n/q, 1): mean n/q, sd √(n/q)
            assert!((g - m.shape()).abs() < 5.0 * m.shape().sqrt(), "q={q} g={g}");
            let pos = x.iter().filter(|&&v| v > 0.0).count() as f64 / m.n as f64;
            assert!((pos - 0.5).abs() < 0.02);
        }
    }

    #[test]
    fn monte_carlo_agrees_with_exact() {
        for q in [1.0, 2.0] {
            for n in [10, 100] {
                for alpha in [0.05, 0.2] {
                    let m = GenGaussianModel::new(q, 1.0, n).unwrap();
                    let exact = exact_gamma(&m, alpha).unwrap();
                    let mc = mc_gamma(&m, alpha, 20_000, 11).unwrap();
                    assert!((mc.gamma_hat - exact).abs() <= 3.0 * mc.mc_std_error, "q={q} n={n} a={alpha}");
                }
            }
        }
    }

    #[test]
    fn monte_carlo_reproducible_and_sharpening() {
        let m = GenGaussianModel::new(1.0, 1.0, 10).unwrap();
        assert_eq!(mc_gamma(&m, 0.1, 2000, 5).unwrap(), mc_gamma(&m, 0.1, 2000, 5).unwrap());
        let coarse = mc_gamma(&m, 0.1, 1000, 5).unwrap();
        let fine = mc_gamma(&m, 0.1, 100_000, 5).unwrap();
        assert!(fine.mc_std_error < coarse.mc_std_error);
        assert!(mc_gamma(&m, 0.1, 999, 5).is_err());
    }

    #[test]
    fn limits() {
        assert_eq!(asymptotic_limit(1.0).unwrap(), 0.0);
        assert_eq!(asymptotic_limit(2.0).unwrap(), 0.5);
        assert_eq!(asymptotic_limit(4.0).unwrap(), 0.75);
        assert!(asymptotic_limit(0.9).is_err());
    }

    #[test]
    fn grid_shape() {
        assert_eq!(log_n_grid(10_000).len(), 13);
        assert_eq!(log_n_grid(10_000)[..4], [1, 2, 5, 10]);
        assert_eq!(*log_n_grid(10_000).last().unwrap(), 10_000);
        assert_eq!(log_n_grid(30), vec![1, 2, 5, 10, 20, 30]);
    }

    #[test]
    fn curve_values_against_oracle() {
        let pts = error_curve(1.0, 1.0, &[10_000], &[0.05]).unwrap();
        let oracle = GammaOracle::new(10_000.0, 1.0).unwrap().inverse_cdf(0.95);
        let tilde = 10_000.0 * ((16.0 * 60f64.ln() / 1e4).sqrt() + 1.0);
        assert!((pts[0].e_n - (tilde - oracle) / 1e4).abs() < 1e-9);
        assert!((pts[0].e_n - 0.0645).abs() < 5e-4, "e = {}", pts[0].e_n);
        let pts = error_curve(2.0, 1.0, &[10_000], &[0.05]).unwrap();
        assert!((pts[0].e_n - 0.569).abs() < 1e-3, "e = {}", pts[0].e_n);
        for p in &pts {
            assert!(((p.gamma_tilde - p.gamma_exact) - p.e_n * p.n as f64).abs() <= 1e-9 * p.gamma_tilde);
        }
        assert!(error_curve(1.0, 1.0, &[10, 5], &[0.1]).is_err());
        assert!(error_curve(1.0, 1.0, &[], &[0.1]).is_err());
    }

    #[test]
    fn csv_layout() {
        let pts = error_curve(2.0, 1.0, &[1, 2], &[0.1]).unwrap();
        let mut buf = Vec::new();
        write_curve_csv(&pts, &mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        let lines: Vec<&str> = text.lines().collect();
        assert_eq!(lines[0], "n,alpha,gamma_exact,gamma_tilde,e_n,limit");
        assert_eq!(lines.len(), 3);
        assert!(lines[1].starts_with("1,0.1,"));
    }

    #[test]
    fn concentration_on_exact_draws() {
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        for n in [100, 1000] {
            let m = GenGaussianModel::new(2.0, 1.0, n).unwrap();
            let mut x = vec![0.0; n];
            let g: Vec<f64> = (0..5000).map(|_| {
                m.sample(&mut rng, &mut x);
                m.potential(&x)
            }).collect();
            for tau in [0.5, 1.0] {
                let c = concentration_check(&g, n, tau, g.len() as f64).unwrap();
                assert!(c.ok, "{c:?}");
            }
        }
        assert!(concentration_check(&[1.0], 1, 3.0, 1.0).is_err());
    }
}
