//! Dimensional constants. `ω_{n−1}` here always denotes the surface measure
//! of the unit sphere `S^{n−1}`, the normalization in which the fundamental
//! solution of `Δ = −Σ∂_i²` is `|x|^{2−n} / ((n−2) ω_{n−1})`.

use std::f64::consts::PI;

/// `Γ(m/2)` for positive integer `m`, by the half-integer recursion.
pub fn gamma_half_integer(m: u32) -> f64 {
    assert!(m >= 1);
    let mut value = if m % 2 == 0 { 1.0 } else { PI.sqrt() };
    let mut k = if m % 2 == 0 { 2 } else { 1 };
    while k + 2 <= m {
        value *= k as f64 / 2.0;
        k += 2;
    }
    value
}

/// Surface area `ω_{n−1} = 2 π^{n/2} / Γ(n/2)` of `S^{n−1} ⊂ ℝⁿ`.
pub fn surface_area(n: u32) -> f64 {
    2.0 * PI.powf(n as f64 / 2.0) / gamma_half_integer(n)
}
