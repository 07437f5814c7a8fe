//! Cancellation-free evaluation of the critical nonlinearity and of
//! rational powers of `ε`.
//!
//! A bubble tower spans many orders of magnitude; quantities like
//! `f(W+φ) − f(W) − f'(W)φ` are ~20 decimal digits below the individual
//! terms near the top bubble and must be formed from relative expansions,
//! never by naive subtraction.

use num_rational::Ratio;

/// Signed power `|u|^{p−1} u`.
pub fn spow(u: f64, p: f64) -> f64 {
    u.signum() * u.abs().powf(p)
}

/// The critical nonlinearity `f(u) = |u|^{2*−2} u` with `p = 2*−1`.
pub fn f_crit(u: f64, p: f64) -> f64 {
    spow(u, p)
}

/// `f'(u) = p |u|^{p−1}`.
pub fn f_crit_deriv(u: f64, p: f64) -> f64 {
    p * u.abs().powf(p - 1.0)
}

/// `(1+y)^p − 1`, accurate for tiny `y`. Signed for `1+y < 0`.
pub fn pow1pm1(y: f64, p: f64) -> f64 {
    if y > -1.0 {
        (p * y.ln_1p()).exp_m1()
    } else {
        spow(1.0 + y, p) - 1.0
    }
}

/// `f(w+v) − f(w)` without cancellation when `|v| << |w|`.
pub fn f_diff(w: f64, v: f64, p: f64) -> f64 {
    if w == 0.0 {
        return f_crit(v, p);
    }
    let y = v / w;
    if y.abs() <= 0.5 {
        f_crit(w, p) * pow1pm1(y, p)
    } else {
        f_crit(w + v, p) - f_crit(w, p)
    }
}

/// Quadratic remainder `f(w+v) − f(w) − f'(w) v`.
///
/// Three regimes: a truncated binomial series for `|v/w| ≤ 1e−3` (the
/// `expm1` route loses the `O(y²)` part there), the `expm1` route up to
/// `|v/w| ≤ 1/2`, and the direct difference otherwise (all terms are then
/// of comparable size and the subtraction is harmless).
pub fn f_quad_remainder(w: f64, v: f64, p: f64) -> f64 {
    if w == 0.0 {
        return f_crit(v, p);
    }
    let y = v / w;
    let ay = y.abs();
    if ay <= 1e-3 {
        let c2 = p * (p - 1.0) / 2.0;
        let c3 = c2 * (p - 2.0) / 3.0;
        let c4 = c3 * (p - 3.0) / 4.0;
        let c5 = c4 * (p - 4.0) / 5.0;
        f_crit(w, p) * y * y * (c2 + y * (c3 + y * (c4 + y * c5)))
    } else if ay <= 0.5 {
        f_crit(w, p) * (pow1pm1(y, p) - p * y)
    } else {
        f_crit(w + v, p) - f_crit(w, p) - f_crit_deriv(w, p) * v
    }
}

/// `x^q` for a rational exponent, via `exp(q ln x)` with a compensated
/// product so large `|q ln x|` (deep tower scales) keeps full precision.
pub fn pow_rational(x: f64, q: Ratio<i64>) -> f64 {
    debug_assert!(x > 0.0);
    let qf = *q.numer() as f64 / *q.denom() as f64;
    let t = x.ln();
    let hi = t * qf;
    let lo = t.mul_add(qf, -hi);
    hi.exp() * (1.0 + lo)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn p7() -> f64 {
        9.0 / 5.0 // 2*−1 at n = 7
    }

    #[test]
    fn f_diff_matches_direct_at_moderate_ratio() {
        let p = p7();
        for &(w, v) in &[(3.0, 1.0), (-2.0, 0.7), (5.0, -2.4), (1e6, 2e5)] {
            let exact = f_crit(w + v, p) - f_crit(w, p);
            let stable = f_diff(w, v, p);
            assert!((exact - stable).abs() <= 1e-12 * exact.abs().max(1.0));
        }
    }

    #[test]
    fn f_diff_keeps_relative_accuracy_for_tiny_perturbations() {
        let p = p7();
        // Reference from the series: f(w)(p y + p(p-1)/2 y² + ...)
        let w = 1e26f64;
        let y = 1e-24f64;
        let v = y * w;
        let expected = f_crit(w, p) * (p * y + p * (p - 1.0) / 2.0 * y * y);
        let got = f_diff(w, v, p);
        assert!(((got - expected) / expected).abs() < 1e-12);
        // The naive difference is pure roundoff at this scale.
    }

    #[test]
    fn quad_remainder_series_consistent_with_expm1_branch() {
        let p = p7();
        let w = 2.0;
        // straddle the 1e-3 branch point
        for &y in &[5e-4, 9e-4, 1.1e-3, 2e-3, 1e-2] {
            let v = y * w;
            let series = {
                let c2 = p * (p - 1.0) / 2.0;
                let c3 = c2 * (p - 2.0) / 3.0;
                let c4 = c3 * (p - 3.0) / 4.0;
                let c5 = c4 * (p - 4.0) / 5.0;
                let c6 = c5 * (p - 5.0) / 6.0;
                f_crit(w, p) * y * y * (c2 + y * (c3 + y * (c4 + y * (c5 + y * c6))))
            };
            let got = f_quad_remainder(w, v, p);
            assert!(
                ((got - series) / series).abs() < 1e-9,
                "y={y}: got {got}, series {series}"
            );
        }
    }

    #[test]
    fn quad_remainder_sign_changing_arguments() {
        let p = p7();
        // near a node of the tower W ~ 0 and |φ| > |W|
        let w = 1e-8;
        let v = -3e-8;
        let direct = f_crit(w + v, p) - f_crit(w, p) - f_crit_deriv(w, p) * v;
        assert_eq!(f_quad_remainder(w, v, p), direct);
    }

    #[test]
    fn pow_rational_extreme_exponents() {
        // ε^{11/3} and ε^{-55/6} at ε = 1e-3: check against powf on the
        // exactly representable pieces.
        let eps = 1e-3f64;
        let got = pow_rational(eps, Ratio::new(11, 3));
        let reference = eps.powf(11.0 / 3.0);
        assert!(((got - reference) / reference).abs() < 1e-13);
        let big = pow_rational(eps, Ratio::new(-55, 6));
        assert!(big.is_finite() && big > 1e27);
    }
}
