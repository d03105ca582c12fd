//! Log-gamma, regularized incomplete gamma functions and their inverse.

use crate::error::{invalid, Result, UqError};

const LANCZOS_G: f64 = 7.0;
const LANCZOS: [f64; 9] = [
    0.999_999_999_999_809_9,
    676.520_368_121_885_1,
    -1_259.139_216_722_402_8,
    771.323_428_777_653_1,
    -176.615_029_162_140_6,
    12.507_343_278_686_905,
    -0.138_571_095_265_720_12,
    9.984_369_578_019_572e-6,
    1.505_632_735_149_311_6e-7,
];

const LN_SQRT_2PI: f64 = 0.918_938_533_204_672_8;

/// `ln Γ(x)` for `x > 0`.
pub fn ln_gamma(x: f64) -> f64 {
    if x < 0.5 {
        // reflection
        let pi = std::f64::consts::PI;
        return (pi / (pi * x).sin()).ln() - ln_gamma(1.0 - x);
    }
    if x >= 10.0 {
        return (x - 0.5) * x.ln() - x + LN_SQRT_2PI + stirling_tail(x);
    }
    let x = x - 1.0;
    let mut acc = LANCZOS[0];
    for (k, &c) in LANCZOS.iter().enumerate().skip(1) {
        acc += c / (x + k as f64);
    }
    let t = x + LANCZOS_G + 0.5;
    LN_SQRT_2PI + (x + 0.5) * t.ln() - t + acc.ln()
}

/// `ln Γ(a) − [(a − ½) ln a − a + ½ ln 2π]`.
fn stirling_tail(a: f64) -> f64 {
    if a < 10.0 {
        return ln_gamma(a) - ((a - 0.5) * a.ln() - a + LN_SQRT_2PI);
    }
    let r = 1.0 / a;
    let r2 = r * r;
    r * (1.0 / 12.0 - r2 * (1.0 / 360.0 - r2 * (1.0 / 1260.0 - r2 * (1.0 / 1680.0 - r2 / 1188.0))))
}

/// `ln(x^a e^{-x} / Γ(a))`, arranged to avoid cancellation at large `a`.
fn ln_prefactor(a: f64, x: f64) -> f64 {
    let t = (x - a) / a;
    a * ((t).ln_1p() - t) + 0.5 * a.ln() - LN_SQRT_2PI - stirling_tail(a)
}

const MAX_TERMS: usize = 1_000_000;

fn series_p(a: f64, x: f64) -> Result<f64> {
    let mut term = 1.0 / a;
    let mut sum = term;
    for k in 1..MAX_TERMS {
        term *= x / (a + k as f64);
        sum += term;
        if term.abs() < sum.abs() * 1e-17 {
            return Ok((ln_prefactor(a, x).exp()) * sum);
        }
    }
    Err(UqError::Numeric(format!("incomplete gamma series did not converge (a = {a}, x = {x})")))
}

fn continued_fraction_q(a: f64, x: f64) -> Result<f64> {
    // modified Lentz on Q = prefactor / (x + 1 - a - 1·(1-a)/(x + 3 - a - ...))
    let tiny = 1e-300;
    let mut b = x + 1.0 - a;
    let mut c = 1.0 / tiny;
    let mut d = 1.0 / b;
    let mut h = d;
    for i in 1..MAX_TERMS {
        let an = -(i as f64) * (i as f64 - a);
        b += 2.0;
        d = an * d + b;
        if d.abs() < tiny {
            d = tiny;
        }
        c = b + an / c;
        if c.abs() < tiny {
            c = tiny;
        }
        d = 1.0 / d;
        let delta = d * c;
        h *= delta;
        if (delta - 1.0).abs() < 1e-16 {
            return Ok(ln_prefactor(a, x).exp() * h);
        }
    }
    Err(UqError::Numeric(format!("incomplete gamma continued fraction did not converge (a = {a}, x = {x})")))
}

fn check_args(a: f64, x: f64) -> Result<()> {
    if !(a > 0.0) || !a.is_finite() {
        return invalid(format!("gamma shape must be positive and finite, got {a}"));
    }
    if !(x >= 0.0) {
        return invalid(format!("gamma argument must be nonnegative, got {x}"));
    }
    Ok(())
}

/// Regularized lower incomplete gamma `P(a, x)`.
pub fn gamma_p(a: f64, x: f64) -> Result<f64> {
    check_args(a, x)?;
    if x == 0.0 {
        return Ok(0.0);
    }
    if x.is_infinite() {
        return Ok(1.0);
    }
    if x < a + 1.0 {
        series_p(a, x).map(|p| p.min(1.0))
    } else {
        continued_fraction_q(a, x).map(|q| (1.0 - q).max(0.0))
    }
}

/// Regularized upper incomplete gamma `Q(a, x) = 1 − P(a, x)`.
pub fn gamma_q(a: f64, x: f64) -> Result<f64> {
    check_args(a, x)?;
    if x == 0.0 {
        return Ok(1.0);
    }
    if x.is_infinite() {
        return Ok(0.0);
    }
    if x < a + 1.0 {
        series_p(a, x).map(|p| (1.0 - p).max(0.0))
    } else {
        continued_fraction_q(a, x).map(|q| q.min(1.0))
    }
}

/// Density of Gamma(a, 1) at `x`.
pub fn gamma_pdf(a: f64, x: f64) -> f64 {
    if x <= 0.0 {
        return 0.0;
    }
    (ln_prefactor(a, x) - x.ln()).exp()
}

/// Standard normal quantile (Acklam's rational approximation, relative
/// error below 1.2e-9). Used for starting values only.
pub fn normal_quantile(p: f64) -> f64 {
    const A: [f64; 6] = [
        -3.969683028665376e1,
        2.209460984245205e2,
        -2.759285104469687e2,
        1.383577518672690e2,
        -3.066479806614716e1,
        2.506628277459239,
    ];
    const B: [f64; 5] = [
        -5.447609879822406e1,
        1.615858368580409e2,
        -1.556989798598866e2,
        6.680131188771972e1,
        -1.328068155288572e1,
    ];
    const C: [f64; 6] = [
        -7.784894002430293e-3,
        -3.223964580411365e-1,
        -2.400758277161838,
        -2.549732539343734,
        4.374664141464968,
        2.938163982698783,
    ];
    const D: [f64; 4] = [7.784695709041462e-3, 3.224671290700398e-1, 2.445134137142996, 3.754408661907416];
    let lo = 0.02425;
    if p <= 0.0 {
        return f64::NEG_INFINITY;
    }
    if p >= 1.0 {
        return f64::INFINITY;
    }
    if p < lo {
        let q = (-2.0 * p.ln()).sqrt();
        (((((C[0] * q + C[1]) * q + C[2]) * q + C[3]) * q + C[4]) * q + C[5])
            / ((((D[0] * q + D[1]) * q + D[2]) * q + D[3]) * q + 1.0)
    } else if p <= 1.0 - lo {
        let q = p - 0.5;
        let r = q * q;
        (((((A[0] * r + A[1]) * r + A[2]) * r + A[3]) * r + A[4]) * r + A[5]) * q
            / (((((B[0] * r + B[1]) * r + B[2]) * r + B[3]) * r + B[4]) * r + 1.0)
    } else {
        -normal_quantile(1.0 - p)
    }
}

/// Solves `Q(a, x) = upper` for `x`: the `(1 − upper)`-quantile of
/// Gamma(a, 1). Bracketed Newton from a Wilson–Hilferty start, stopping
/// when the regularized value is within `1e-10` (or the bracket collapses).
pub fn gamma_upper_quantile(a: f64, upper: f64) -> Result<f64> {
    if !(a > 0.0) || !a.is_finite() {
        return invalid(format!("gamma shape must be positive and finite, got {a}"));
    }
    if !(upper > 0.0 && upper < 1.0) {
        return invalid(format!("tail probability must lie in (0, 1), got {upper}"));
    }
    let z = normal_quantile(1.0 - upper);
    let k = 1.0 / (9.0 * a);
    let wh = a * (1.0 - k + z * k.sqrt()).powi(3);
    let mut x = if wh.is_finite() && wh > 0.0 { wh } else { a.max(1e-3) };

    // bracket [lo, hi] with Q(lo) ≥ upper ≥ Q(hi); Q is decreasing
    let mut lo = 0.0;
    let mut hi = x;
    let mut guard = 0;
    while gamma_q(a, hi)? > upper {
        lo = hi;
        hi = 2.0 * hi + 1.0;
        guard += 1;
        if guard > 2000 {
            return Err(UqError::Numeric("could not bracket the gamma quantile".into()));
        }
    }
    if x <= lo || x > hi {
        x = 0.5 * (lo + hi);
    }
    for _ in 0..500 {
        let f = gamma_q(a, x)? - upper;
        if f.abs() <= 1e-10 * upper.min(1.0 - upper).max(1e-300) || f == 0.0 {
            return Ok(x);
        }
        if f > 0.0 {
            lo = x;
        } else {
            hi = x;
        }
        let dens = gamma_pdf(a, x);
        // Q' = -density
        let newton = x + f / dens;
        x = if dens > 0.0 && newton > lo && newton < hi { newton } else { 0.5 * (lo + hi) };
        if (hi - lo) <= 4.0 * f64::EPSILON * hi {
            return Ok(x);
        }
    }
    Err(UqError::Numeric(format!("gamma quantile inversion did not converge (a = {a}, tail = {upper})")))
}

#[cfg(test)]
mod tests {
    use super::*;
    use statrs::distribution::{ChiSquared, ContinuousCDF, Gamma};
    use statrs::function::gamma as sg;

    #[test]
    fn ln_gamma_against_oracle() {
        for &x in &[0.1, 0.5, 1.0, 1.5, 2.0, 3.7, 9.99, 10.0, 25.5, 1e3, 1e5] {
            let want = sg::ln_gamma(x);
            assert!((ln_gamma(x) - want).abs() < 1e-12 * want.abs().max(1.0), "x={x}");
        }
        assert!((ln_gamma(5.0) - 24f64.ln()).abs() < 1e-13);
    }

    #[test]
    fn regularized_values_against_oracle() {
        for &a in &[0.5, 1.0, 2.5, 10.0, 50.0, 1000.0, 1e5] {
            for &r in &[0.1, 0.5, 0.9, 1.0, 1.1, 2.0, 3.0] {
                let x = a * r;
                let p = gamma_p(a, x).unwrap();
                let q = gamma_q(a, x).unwrap();
                let want = sg::gamma_lr(a, x);
                assert!((p - want).abs() < 1e-10, "a={a} x={x} p={p} want={want}");
                assert!((p + q - 1.0).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn exponential_special_case() {
        for &x in &[0.01, 0.5, 3.0, 20.0] {
            assert!((gamma_q(1.0, x).unwrap() - (-x as f64).exp()).abs() < 1e-14);
        }
    }

    #[test]
    fn bad_arguments() {
        assert!(gamma_p(0.0, 1.0).is_err());
        assert!(gamma_q(1.0, -1.0).is_err());
        assert!(gamma_upper_quantile(1.0, 0.0).is_err());
        assert!(gamma_upper_quantile(-1.0, 0.5).is_err());
        assert_eq!(gamma_p(2.0, 0.0).unwrap(), 0.0);
        assert_eq!(gamma_q(2.0, f64::INFINITY).unwrap(), 0.0);
    }

    #[test]
    fn normal_quantile_values() {
        assert!(normal_quantile(0.5).abs() < 1e-12);
        assert!((normal_quantile(0.975) - 1.959963984540054).abs() < 1e-8);
        assert!((normal_quantile(0.001) + 3.090232306167813).abs() < 1e-8);
    }

    #[test]
    fn quantiles_match_chi_square_identities() {
        // Gamma(k/2, 1) quantile = χ²_k quantile / 2
        assert!((gamma_upper_quantile(1.0, 0.05).unwrap() - 20f64.ln()).abs() < 1e-9);
        let x2 = ChiSquared::new(4.0).unwrap().inverse_cdf(0.95) / 2.0;
        assert!((gamma_upper_quantile(2.0, 0.05).unwrap() - x2).abs() < 1e-8);
        assert!((gamma_upper_quantile(2.0, 0.05).unwrap() - 4.7439).abs() < 1e-4);
        let x1 = ChiSquared::new(1.0).unwrap().inverse_cdf(0.95) / 2.0;
        assert!((gamma_upper_quantile(0.5, 0.05).unwrap() - x1).abs() < 1e-8);
        assert!((gamma_upper_quantile(0.5, 0.05).unwrap() - 1.9207).abs() < 1e-4);
    }

    #[test]
    fn quantiles_across_shapes() {
        for &a in &[0.5, 0.75, 1.0, 5.0, 2.5e3, 5e3, 1e4, 1e5] {
            for &u in &[0.99, 0.8, 0.5, 0.2, 0.1, 0.05, 0.01, 1e-4] {
                let x = gamma_upper_quantile(a, u).unwrap();
                let q = gamma_q(a, x).unwrap();
                assert!((q - u).abs() < 1e-9, "a={a} u={u} q={q}");
                let want = Gamma::new(a, 1.0).unwrap().inverse_cdf(1.0 - u);
                assert!((x - want).abs() < 1e-6 * want.max(1.0), "a={a} u={u} x={x} want={want}");
            }
        }
    }
}
