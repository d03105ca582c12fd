//! Proximal Metropolis-adjusted Langevin sampling of `exp(−g_y(x))`.
//!
//! Proposals follow the Langevin drift of the Moreau envelope `g^λ`; the
//! Metropolis–Hastings step corrects against the exact potential, so the
//! chain targets the posterior itself.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Result, UqError};
use crate::image::Image;
use crate::map_admm::{solve_map, AdmmConfig};
use crate::model::PosteriorModel;
use crate::prox::{ProxConfig, ProxSolver};
use crate::region::CredibleRegion;
use crate::scalar::Real;
use crate::stats::{batch_means_ess, estimate_quantile, QuantileEstimate, DEFAULT_BATCHES};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ChainConfig {
    pub step_delta: f64,
    /// Moreau-envelope parameter; `None` keeps it at `δ/2`, which makes the
    /// drift `prox_{δ/2·g}(x)`.
    pub moreau_lambda: Option<f64>,
    pub iterations: usize,
    pub burn_in: usize,
    pub thin: usize,
    pub seed: u64,
    /// Acceptance rate targeted by the burn-in adaptation of `δ`.
    pub target_acceptance: Option<f64>,
    pub inner_tol: f64,
    pub inner_max_iters: usize,
}

impl Default for ChainConfig {
    fn default() -> Self {
        Self {
            step_delta: 1e-2,
            moreau_lambda: None,
            iterations: 200_000,
            burn_in: 20_000,
            thin: 1,
            seed: 0,
            target_acceptance: Some(0.5),
            inner_tol: 1e-6,
            inner_max_iters: 2000,
        }
    }
}

impl ChainConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.step_delta > 0.0) || !self.step_delta.is_finite() {
            return invalid(format!("step size must be positive, got {}", self.step_delta));
        }
        if let Some(l) = self.moreau_lambda {
            if !(l > 0.0) || !l.is_finite() {
                return invalid(format!("Moreau parameter must be positive, got {l}"));
            }
        }
        if self.iterations == 0 || self.burn_in >= self.iterations {
            return invalid(format!(
                "burn-in ({}) must be smaller than the number of iterations ({})",
                self.burn_in, self.iterations
            ));
        }
        if self.thin == 0 {
            return invalid("thin must be at least 1");
        }
        if let Some(a) = self.target_acceptance {
            if !(a > 0.0 && a < 1.0) {
                return invalid(format!("target acceptance must lie in (0, 1), got {a}"));
            }
        }
        ProxConfig { inner_max_iters: self.inner_max_iters, inner_tol: self.inner_tol }.validate()
    }

    fn prox_config<T: Real>(&self) -> ProxConfig<T> {
        ProxConfig { inner_max_iters: self.inner_max_iters, inner_tol: T::lit(self.inner_tol) }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChainOutput {
    pub g_samples: Vec<f64>,
    /// Acceptance rate after burn-in.
    pub acceptance_rate: f64,
    pub ess_estimate: f64,
    pub seed: u64,
    pub burn_in_acceptance: f64,
    /// Step size in force after burn-in.
    pub final_delta: f64,
    pub iterations: usize,
}

/// `log q(to | from) + const = −‖to − μ(from)‖² / (2δ)`.
pub fn log_proposal_density<T: Real>(to: &Image<T>, drift_from: &Image<T>, delta: f64) -> f64 {
    let d = to.distance(drift_from).as_f64();
    -d * d / (2.0 * delta)
}

/// One px-MALA transition. Stateless variant: recomputes the drift at `x`.
pub fn pxmala_step<T: Real>(
    model: &PosteriorModel<T>,
    x: &Image<T>,
    cfg: &ChainConfig,
    rng: &mut ChaCha8Rng,
) -> Result<(Image<T>, bool)> {
    cfg.validate()?;
    let mut s = PxMala::new(model, x.clone(), cfg)?;
    let accepted = s.step(rng)?;
    Ok((s.state().clone(), accepted))
}

/// Chain state with the cached drift of the current point and a warm-started
/// inner prox solver.
pub struct PxMala<'m, T: Real> {
    model: &'m PosteriorModel<T>,
    prox: ProxSolver<'m, T>,
    delta: f64,
    moreau_lambda: Option<f64>,
    x: Image<T>,
    g: f64,
    drift: Image<T>,
    noise: Vec<T>,
}

impl<'m, T: Real> PxMala<'m, T> {
    pub fn new(model: &'m PosteriorModel<T>, x0: Image<T>, cfg: &ChainConfig) -> Result<Self> {
        cfg.validate()?;
        let (h, w) = model.shape();
        x0.check_shape(h, w, "px-MALA start")?;
        let g = model.eval_potential(&x0)?.total.as_f64();
        if !g.is_finite() {
            return invalid(format!("starting point has potential {g}"));
        }
        let mut prox = ProxSolver::new(model, cfg.prox_config())?;
        let drift = Self::drift_of(&mut prox, &x0, cfg.step_delta, cfg.moreau_lambda)?;
        Ok(Self {
            model,
            prox,
            delta: cfg.step_delta,
            moreau_lambda: cfg.moreau_lambda,
            x: x0,
            g,
            drift,
            noise: vec![T::zero(); h * w],
        })
    }

    fn drift_of(prox: &mut ProxSolver<'m, T>, x: &Image<T>, delta: f64, ml: Option<f64>) -> Result<Image<T>> {
        match ml {
            None => prox.prox(x, T::lit(delta / 2.0)),
            Some(l) => {
                let grad = prox.moreau_grad(x, T::lit(l))?;
                Ok(x.lin_comb(T::one(), &grad, T::lit(-delta / 2.0)))
            }
        }
    }

    pub fn state(&self) -> &Image<T> {
        &self.x
    }

    pub fn potential(&self) -> f64 {
        self.g
    }

    /// Inner prox iterations spent on the most recent drift.
    pub fn last_inner_iterations(&self) -> usize {
        self.prox.last_iterations()
    }

    pub fn delta(&self) -> f64 {
        self.delta
    }

    /// Changes the step size and refreshes the cached drift.
    pub fn set_delta(&mut self, delta: f64) -> Result<()> {
        if !(delta > 0.0) || !delta.is_finite() {
            return Err(UqError::Numeric(format!("step size became {delta}")));
        }
        self.delta = delta;
        self.drift = Self::drift_of(&mut self.prox, &self.x, delta, self.moreau_lambda)?;
        Ok(())
    }

    /// Runs one transition; returns the Metropolis–Hastings acceptance
    /// probability together with the accept flag.
    pub fn step_with_probability(&mut self, rng: &mut ChaCha8Rng) -> Result<(bool, f64)> {
        let sd = T::lit(self.delta.sqrt());
        for v in self.noise.iter_mut() {
            let z: f64 = StandardNormal.sample(rng);
            *v = T::lit(z) * sd;
        }
        let (h, w) = self.model.shape();
        let prop_data: Vec<T> = self.drift.data().iter().zip(&self.noise).map(|(&m, &e)| m + e).collect();
        let prop = Image::from_vec_unchecked(h, w, prop_data);
        let u: f64 = rand::Rng::random(rng);

        let g_prop = self.model.eval_potential(&prop)?.total.as_f64();
        if g_prop.is_nan() {
            return Err(UqError::Numeric("potential at proposal is NaN".into()));
        }
        if g_prop == f64::INFINITY {
            return Ok((false, 0.0));
        }
        let drift_prop = Self::drift_of(&mut self.prox, &prop, self.delta, self.moreau_lambda)?;
        let log_ratio = -g_prop + self.g + log_proposal_density(&self.x, &drift_prop, self.delta)
            - log_proposal_density(&prop, &self.drift, self.delta);
        let prob = if log_ratio >= 0.0 { 1.0 } else { log_ratio.exp() };
        let accepted = u < prob;
        if accepted {
            self.x = prop;
            self.g = g_prop;
            self.drift = drift_prop;
        }
        Ok((accepted, prob))
    }

    pub fn step(&mut self, rng: &mut ChaCha8Rng) -> Result<bool> {
        self.step_with_probability(rng).map(|(a, _)| a)
    }
}

const ADAPT_EVERY: usize = 10;

/// Runs a chain from `x0` (default: the MAP estimate) and records `g` at the
/// retained states.
pub fn run_chain<T: Real>(model: &PosteriorModel<T>, cfg: &ChainConfig, x0: Option<&Image<T>>) -> Result<ChainOutput> {
    cfg.validate()?;
    let start = match x0 {
        Some(x) => x.clone(),
        None => solve_map(model, &AdmmConfig::default(), None)?.x_map,
    };
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut chain = PxMala::new(model, start, cfg)?;

    let mut window = 0.0;
    let mut rounds = 0usize;
    let mut burn_acc = 0usize;
    for i in 0..cfg.burn_in {
        let (acc, prob) = chain.step_with_probability(&mut rng).map_err(|e| chain_failure(i, e))?;
        burn_acc += acc as usize;
        window += prob;
        if (i + 1) % ADAPT_EVERY == 0 {
            if let Some(target) = cfg.target_acceptance {
                rounds += 1;
                // slow decay: leaving the kinked MAP point needs tiny steps, which the
                // typical set then no longer wants
                let gain = (1.0 + rounds as f64 / 50.0).powf(-0.6);
                let mean_prob = window / ADAPT_EVERY as f64;
                let next = chain.delta() * (gain * (mean_prob - target)).exp();
                chain.set_delta(next).map_err(|e| chain_failure(i, e))?;
            }
            window = 0.0;
        }
    }

    let kept = cfg.iterations - cfg.burn_in;
    let mut g_samples = Vec::with_capacity(kept / cfg.thin);
    let mut accepted = 0usize;
    for j in 1..=kept {
        let it = cfg.burn_in + j - 1;
        accepted += chain.step(&mut rng).map_err(|e| chain_failure(it, e))? as usize;
        if j % cfg.thin == 0 {
            let g = chain.potential();
            if !g.is_finite() {
                return Err(UqError::ChainFailure { iteration: it, message: format!("potential is {g}") });
            }
            g_samples.push(g);
        }
    }
    let ess_estimate = batch_means_ess(&g_samples, DEFAULT_BATCHES);
    Ok(ChainOutput {
        g_samples,
        acceptance_rate: accepted as f64 / kept as f64,
        ess_estimate,
        seed: cfg.seed,
        burn_in_acceptance: if cfg.burn_in > 0 { burn_acc as f64 / cfg.burn_in as f64 } else { f64::NAN },
        final_delta: chain.delta(),
        iterations: cfg.iterations,
    })
}

fn chain_failure(iteration: usize, e: UqError) -> UqError {
    match e {
        UqError::Numeric(message) => UqError::ChainFailure { iteration, message },
        other => other,
    }
}

/// Empirical `(1 − α)`-quantile of the chain's potential values.
pub fn estimate_gamma(out: &ChainOutput, alpha: f64) -> Result<QuantileEstimate> {
    let mut est = estimate_quantile(&out.g_samples, alpha, DEFAULT_BATCHES)?;
    est.method = format!("px-MALA; {}", est.method);
    Ok(est)
}

/// `(γ̃ − γ̂)/γ̂`.
pub fn relative_error(region: &CredibleRegion, est: &QuantileEstimate) -> Result<f64> {
    if !(est.gamma_hat > 0.0) {
        return invalid(format!("estimated threshold must be positive, got {}", est.gamma_hat));
    }
    Ok((region.gamma_tilde - est.gamma_hat) / est.gamma_hat)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::region::build_region;
    use crate::stats::{mean, mean_std_error, variance};

    fn gg(n: usize, q: f64) -> PosteriorModel<f64> {
        let side = (n as f64).sqrt() as usize;
        assert_eq!(side * side, n);
        PosteriorModel::gen_gaussian(side, side, q, 1.0).unwrap()
    }

    #[test]
    fn config_validation() {
        let ok = ChainConfig { iterations: 10, burn_in: 5, ..Default::default() };
        assert!(ok.validate().is_ok());
        for bad in [
            ChainConfig { step_delta: 0.0, ..ok },
            ChainConfig { burn_in: 10, ..ok },
            ChainConfig { thin: 0, ..ok },
            ChainConfig { target_acceptance: Some(1.0), ..ok },
            ChainConfig { moreau_lambda: Some(-1.0), ..ok },
        ] {
            assert!(bad.validate().is_err());
        }
    }

    #[test]
    fn vanishing_step_always_accepts() {
        let m = gg(16, 1.0);
        let cfg = ChainConfig { step_delta: 1e-10, iterations: 101, burn_in: 1, target_acceptance: None, ..Default::default() };
        let x0 = Image::from_fn(4, 4, |i, j| (i as f64 - j as f64) * 0.4);
        let mut s = PxMala::new(&m, x0, &cfg).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let mut acc = 0;
        for _ in 0..100 {
            acc += s.step(&mut rng).unwrap() as usize;
        }
        assert!(acc as f64 / 100.0 >= 0.999);
    }

    #[test]
    fn proposal_density_is_symmetric_in_its_form() {
        let a = Image::from_fn(3, 3, |i, j| (i * 3 + j) as f64 * 0.1);
        let b = a.map(|v| v * v - 0.2);
        assert_eq!(log_proposal_density(&a, &b, 0.3), log_proposal_density(&b, &a, 0.3));
        assert!((log_proposal_density(&a, &a, 0.3)).abs() == 0.0);
    }

    #[test]
    fn one_dimensional_gaussian_variance() {
        // exp(-x²) has variance 1/2
        let m = PosteriorModel::gen_gaussian(1, 1, 2.0, 1.0).unwrap();
        let cfg = ChainConfig {
            step_delta: 0.5,
            iterations: 101_000,
            burn_in: 1_000,
            seed: 3,
            ..Default::default()
        };
        let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
        let mut s = PxMala::new(&m, Image::zeros(1, 1), &cfg).unwrap();
        let mut xs = Vec::with_capacity(100_000);
        for _ in 0..101_000 {
            s.step(&mut rng).unwrap();
            xs.push(s.state().data()[0]);
        }
        let xs = &xs[1000..];
        let sq: Vec<f64> = xs.iter().map(|v| v * v).collect();
        let var = mean(&sq) - mean(xs).powi(2);
        let se = mean_std_error(&sq, 20);
        assert!((var - 0.5).abs() <= 3.0 * se, "var {var} se {se}");
        assert!(variance(xs) > 0.0);
    }

    #[test]
    fn gen_gaussian_potential_mean() {
        let m = gg(100, 2.0);
        let cfg = ChainConfig { step_delta: 0.1, iterations: 60_000, burn_in: 5_000, seed: 4, ..Default::default() };
        let out = run_chain(&m, &cfg, None).unwrap();
        let se = mean_std_error(&out.g_samples, 20);
        assert!((mean(&out.g_samples) - 50.0).abs() <= 3.0 * se, "mean {} se {se}", mean(&out.g_samples));
        assert!((0.3..=0.7).contains(&out.acceptance_rate), "acc {}", out.acceptance_rate);
        assert!(out.ess_estimate > 0.0);
    }

    #[test]
    fn thinning_counts() {
        let m = gg(4, 1.0);
        for (iters, burn, thin) in [(100, 10, 1), (100, 10, 7), (57, 0, 4)] {
            let cfg = ChainConfig { iterations: iters, burn_in: burn, thin, step_delta: 0.2, ..Default::default() };
            let out = run_chain(&m, &cfg, None).unwrap();
            assert_eq!(out.g_samples.len(), (iters - burn) / thin);
        }
    }

    #[test]
    fn identical_seeds_identical_chains() {
        let m = gg(9, 1.5);
        let cfg = ChainConfig { iterations: 500, burn_in: 100, step_delta: 0.3, seed: 21, ..Default::default() };
        assert_eq!(run_chain(&m, &cfg, None).unwrap(), run_chain(&m, &cfg, None).unwrap());
        let other = ChainConfig { seed: 22, ..cfg };
        assert_ne!(run_chain(&m, &cfg, None).unwrap().g_samples, run_chain(&m, &other, None).unwrap().g_samples);
    }

    #[test]
    fn explicit_moreau_parameter() {
        let m = gg(4, 1.0);
        let cfg = ChainConfig {
            iterations: 2000,
            burn_in: 500,
            step_delta: 0.2,
            moreau_lambda: Some(0.05),
            ..Default::default()
        };
        let out = run_chain(&m, &cfg, None).unwrap();
        assert!(out.acceptance_rate > 0.0 && out.acceptance_rate <= 1.0);
    }

    #[test]
    fn nonneg_chain_stays_feasible() {
        let m = gg(4, 1.0).with_nonneg(true);
        let cfg = ChainConfig { iterations: 3000, burn_in: 500, step_delta: 0.2, ..Default::default() };
        let out = run_chain(&m, &cfg, Some(&Image::filled(2, 2, 0.5))).unwrap();
        assert!(out.g_samples.iter().all(|g| g.is_finite()));
    }

    #[test]
    fn quantile_and_relative_error() {
        let out = ChainOutput {
            g_samples: (1..=100).map(f64::from).collect(),
            acceptance_rate: 0.5,
            ess_estimate: 100.0,
            seed: 0,
            burn_in_acceptance: 0.5,
            final_delta: 1.0,
            iterations: 100,
        };
        let est = estimate_gamma(&out, 0.05).unwrap();
        assert!((est.gamma_hat - 95.05).abs() < 1e-12);
        let r = build_region(0.05, 100, 0.0).unwrap();
        let same = QuantileEstimate { gamma_hat: r.gamma_tilde, ..est.clone() };
        assert_eq!(relative_error(&r, &same).unwrap(), 0.0);
        let bad = QuantileEstimate { gamma_hat: 0.0, ..est };
        assert!(relative_error(&r, &bad).is_err());
    }

    #[test]
    fn stateless_step_matches_sampler() {
        let m = gg(4, 2.0);
        let cfg = ChainConfig { iterations: 10, burn_in: 1, step_delta: 0.3, ..Default::default() };
        let x0 = Image::filled(2, 2, 0.1);
        let mut r1 = ChaCha8Rng::seed_from_u64(9);
        let mut r2 = ChaCha8Rng::seed_from_u64(9);
        let (x1, a1) = pxmala_step(&m, &x0, &cfg, &mut r1).unwrap();
        let mut s = PxMala::new(&m, x0, &cfg).unwrap();
        let a2 = s.step(&mut r2).unwrap();
        assert_eq!((x1, a1), (s.state().clone(), a2));
    }
}
