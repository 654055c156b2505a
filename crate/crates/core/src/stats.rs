//! Chi-square distribution pieces used by the `chisq` threshold policy.
//!
//! The CDF is the regularized lower incomplete gamma function, computed with
//! the usual split: a power series for `x < a + 1`, a Lentz continued
//! fraction otherwise. The quantile inverts the CDF by bisection, which is
//! cheap (one evaluation is microseconds) and immune to the derivative
//! blow-ups that bite Newton steps near the tails.

use crate::error::{Error, Result};

const LANCZOS_G: f64 = 7.0;
const LANCZOS_COEFFS: [f64; 9] = [
    0.999_999_999_999_809_93,
    676.520_368_121_885_1,
    -1_259.139_216_722_402_8,
    771.323_428_777_653_13,
    -176.615_029_162_140_59,
    12.507_343_278_686_905,
    -0.138_571_095_265_720_12,
    9.984_369_578_019_571_6e-6,
    1.505_632_735_149_311_6e-7,
];

/// Natural log of the gamma function for `x > 0`.
pub fn ln_gamma(x: f64) -> f64 {
    debug_assert!(x > 0.0);
    if x < 0.5 {
        // Reflection keeps the Lanczos argument in its accurate range.
        let pi = std::f64::consts::PI;
        return (pi / (pi * x).sin()).ln() - ln_gamma(1.0 - x);
    }
    let x = x - 1.0;
    let mut acc = LANCZOS_COEFFS[0];
    let t = x + LANCZOS_G + 0.5;
    for (i, &c) in LANCZOS_COEFFS.iter().enumerate().skip(1) {
        acc += c / (x + i as f64);
    }
    0.5 * (2.0 * std::f64::consts::PI).ln() + (x + 0.5) * t.ln() - t + acc.ln()
}

/// Regularized lower incomplete gamma `P(a, x)` for `a > 0`, `x >= 0`.
pub fn gamma_p(a: f64, x: f64) -> f64 {
    debug_assert!(a > 0.0 && x >= 0.0);
    if x == 0.0 {
        return 0.0;
    }
    if x < a + 1.0 {
        gamma_p_series(a, x)
    } else {
        1.0 - gamma_q_continued_fraction(a, x)
    }
}

fn gamma_p_series(a: f64, x: f64) -> f64 {
    let mut term = 1.0 / a;
    let mut sum = term;
    for n in 1..600 {
        term *= x / (a + n as f64);
        sum += term;
        if term.abs() < sum.abs() * 1e-17 {
            break;
        }
    }
    sum * (-x + a * x.ln() - ln_gamma(a)).exp()
}

fn gamma_q_continued_fraction(a: f64, x: f64) -> f64 {
    const TINY: f64 = 1e-300;
    let mut b = x + 1.0 - a;
    let mut c = 1.0 / TINY;
    let mut d = 1.0 / b;
    let mut h = d;
    for i in 1..600 {
        let an = -(i as f64) * (i as f64 - a);
        b += 2.0;
        d = an * d + b;
        if d.abs() < TINY {
            d = TINY;
        }
        c = b + an / c;
        if c.abs() < TINY {
            c = TINY;
        }
        d = 1.0 / d;
        let delta = d * c;
        h *= delta;
        if (delta - 1.0).abs() < 1e-17 {
            break;
        }
    }
    (-x + a * x.ln() - ln_gamma(a)).exp() * h
}

/// CDF of the chi-square distribution with `dims` degrees of freedom.
pub fn chi2_cdf(x: f64, dims: usize) -> f64 {
    debug_assert!(dims >= 1);
    if x <= 0.0 {
        return 0.0;
    }
    gamma_p(dims as f64 / 2.0, x / 2.0)
}

/// Quantile of the chi-square distribution: the `x` with `chi2_cdf(x) = p`.
///
/// `p` must lie in `[0, 1)`; the inversion bisects until the bracket is
/// relatively narrower than 1e-13, well inside the documented 1e-8 bound.
pub fn chi2_quantile(p: f64, dims: usize) -> Result<f64> {
    if dims == 0 {
        return Err(Error::config("threshold", "chi-square dims must be at least 1"));
    }
    if !(0.0..1.0).contains(&p) {
        return Err(Error::config("threshold", format!("chi-square probability {p} outside [0, 1)")));
    }
    if p == 0.0 {
        return Ok(0.0);
    }
    let mut lo = 0.0;
    let mut hi = dims as f64 + 10.0 * (2.0 * dims as f64).sqrt() + 50.0;
    while chi2_cdf(hi, dims) < p {
        hi *= 2.0;
        if hi > 1e300 {
            return Err(Error::numeric("threshold", format!("chi-square quantile at p={p} did not bracket")));
        }
    }
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if chi2_cdf(mid, dims) < p {
            lo = mid;
        } else {
            hi = mid;
        }
        if hi - lo <= 1e-13 * hi.max(1.0) {
            break;
        }
    }
    Ok(0.5 * (lo + hi))
}
