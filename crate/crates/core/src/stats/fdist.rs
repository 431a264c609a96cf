//! Fisher–Snedecor F distribution via the regularised incomplete beta function.

use statrs::function::beta::beta_reg;

const BISECTION_TOL: f64 = 1e-10;

/// CDF of F(d1, d2) at `x`.
pub fn f_cdf(x: f64, d1: f64, d2: f64) -> f64 {
    if x <= 0.0 {
        return 0.0;
    }
    if x.is_infinite() {
        return 1.0;
    }
    beta_reg(d1 / 2.0, d2 / 2.0, d1 * x / (d1 * x + d2))
}

/// Quantile of F(d1, d2) at probability `p`, found by bisection on the beta
/// argument `u = d1 x / (d1 x + d2)` to an absolute tolerance of 1e-10.
pub fn f_quantile(p: f64, d1: f64, d2: f64) -> f64 {
    assert!(d1 > 0.0 && d2 > 0.0, "degrees of freedom must be positive");
    if p <= 0.0 {
        return 0.0;
    }
    if p >= 1.0 {
        return f64::INFINITY;
    }
    let (a, b) = (d1 / 2.0, d2 / 2.0);
    let (mut lo, mut hi) = (0.0f64, 1.0f64);
    while hi - lo > BISECTION_TOL {
        let mid = 0.5 * (lo + hi);
        if beta_reg(a, b, mid) < p {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    let u = 0.5 * (lo + hi);
    d2 * u / (d1 * (1.0 - u))
}
