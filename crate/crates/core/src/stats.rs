//! Empirical quantiles and batch-means error estimates.

use serde::{Deserialize, Serialize};

use crate::error::{invalid, Result};

pub const DEFAULT_BATCHES: usize = 20;

/// `(1 − α)`-quantile estimate of a scalar statistic.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QuantileEstimate {
    pub gamma_hat: f64,
    pub alpha: f64,
    pub mc_std_error: f64,
    pub method: String,
}

/// Quantile of sorted data with linear interpolation at `h = (N − 1)p`.
pub fn quantile_sorted(sorted: &[f64], p: f64) -> f64 {
    let n = sorted.len();
    if n == 1 {
        return sorted[0];
    }
    let h = (n - 1) as f64 * p.clamp(0.0, 1.0);
    let lo = h.floor() as usize;
    let hi = (lo + 1).min(n - 1);
    sorted[lo] + (h - lo as f64) * (sorted[hi] - sorted[lo])
}

pub fn quantile(samples: &[f64], p: f64) -> f64 {
    let mut s = samples.to_vec();
    s.sort_by(|a, b| a.total_cmp(b));
    quantile_sorted(&s, p)
}

pub fn mean(x: &[f64]) -> f64 {
    x.iter().sum::<f64>() / x.len() as f64
}

pub fn variance(x: &[f64]) -> f64 {
    let m = mean(x);
    x.iter().map(|v| (v - m) * (v - m)).sum::<f64>() / (x.len() as f64 - 1.0)
}

fn batches(x: &[f64], count: usize) -> Vec<&[f64]> {
    let size = x.len() / count;
    (0..count).map(|b| &x[b * size..(b + 1) * size]).collect()
}

/// Effective sample size from batch means: `N · Var(x) / (b · Var(batch means))`.
pub fn batch_means_ess(x: &[f64], count: usize) -> f64 {
    let n = x.len();
    if count < 2 || n < 2 * count {
        return n as f64;
    }
    let size = n / count;
    let means: Vec<f64> = batches(x, count).into_iter().map(mean).collect();
    let var_b = variance(&means);
    let var = variance(&x[..size * count]);
    if var_b <= 0.0 || var <= 0.0 {
        return n as f64;
    }
    ((size * count) as f64 * var / (size as f64 * var_b)).min(n as f64)
}

/// Standard error of the sample mean by batch means.
pub fn mean_std_error(x: &[f64], count: usize) -> f64 {
    if count < 2 || x.len() < 2 * count {
        return (variance(x) / x.len() as f64).sqrt();
    }
    let means: Vec<f64> = batches(x, count).into_iter().map(mean).collect();
    (variance(&means) / count as f64).sqrt()
}

/// `(1 − α)`-quantile with a batch-means standard error: the spread of the
/// per-batch quantiles divided by √(batches).
pub fn estimate_quantile(samples: &[f64], alpha: f64, count: usize) -> Result<QuantileEstimate> {
    if samples.is_empty() {
        return invalid("no samples to estimate a quantile from");
    }
    if !(alpha > 0.0 && alpha < 1.0) {
        return invalid(format!("alpha must lie in (0, 1), got {alpha}"));
    }
    if samples.iter().any(|v| !v.is_finite()) {
        return invalid("samples contain non-finite values");
    }
    let p = 1.0 - alpha;
    let gamma_hat = quantile(samples, p);
    let mut method = format!("empirical quantile, batch means ({count} batches)");
    let se = if count >= 2 && samples.len() >= 2 * count {
        let qs: Vec<f64> = batches(samples, count).into_iter().map(|b| quantile(b, p)).collect();
        (variance(&qs) / count as f64).sqrt()
    } else {
        method.push_str("; too few samples for batching");
        f64::INFINITY
    };
    if (samples.len() as f64) < 100.0 / alpha {
        method.push_str(&format!("; warning: fewer than 100/alpha = {:.0} samples", 100.0 / alpha));
    }
    Ok(QuantileEstimate { gamma_hat, alpha, mc_std_error: se, method })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn interpolated_quantile() {
        let x: Vec<f64> = (1..=100).map(f64::from).collect();
        let e = estimate_quantile(&x, 0.05, 20).unwrap();
        assert!((e.gamma_hat - 95.05).abs() < 1e-12);
        assert!(e.mc_std_error >= 0.0);
        assert!(e.method.contains("warning"));
        assert_eq!(quantile(&x, 0.0), 1.0);
        assert_eq!(quantile(&x, 1.0), 100.0);
        assert!((estimate_quantile(&x, 1.0 - 1e-12, 20).unwrap().gamma_hat - 1.0).abs() < 1e-9);
        assert_eq!(quantile(&[3.0], 0.3), 3.0);
    }

    #[test]
    fn bad_inputs() {
        assert!(estimate_quantile(&[], 0.1, 20).is_err());
        assert!(estimate_quantile(&[1.0], 0.0, 20).is_err());
        assert!(estimate_quantile(&[1.0, f64::NAN], 0.5, 20).is_err());
    }

    #[test]
    fn ess_of_independent_and_correlated_data() {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(1);
        let iid: Vec<f64> = (0..20000).map(|_| rng.random::<f64>()).collect();
        let ess = batch_means_ess(&iid, 20);
        assert!(ess > 8000.0, "ess {ess}");
        // AR(1) with φ = 0.9 has ESS ≈ N (1 − φ)/(1 + φ)
        let mut ar = vec![0.0; 20000];
        for i in 1..ar.len() {
            ar[i] = 0.9 * ar[i - 1] + rng.random::<f64>() - 0.5;
        }
        let ess = batch_means_ess(&ar, 20);
        assert!(ess < 3000.0 && ess > 300.0, "ess {ess}");
        let se = mean_std_error(&iid, 20);
        assert!((se - (1.0 / 12.0 / 20000.0f64).sqrt()).abs() < 0.5 * se);
    }
}
