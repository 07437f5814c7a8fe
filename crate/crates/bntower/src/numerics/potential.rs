//! Radial Newtonian potential: `x ↦ ∫_{ℝⁿ} |x−y|^{2−n} g(|y|) dy`.
//!
//! For radial densities the spherical average of `|x−y|^{2−n}` over
//! `|y| = s` is `max(|x|, s)^{2−n}`, which collapses the potential to
//! `ω_{n−1} [ r^{2−n} ∫_0^r g s^{n−1} ds + ∫_r^∞ g s ds ]`. The constant
//! `ω_{n−1}` is pinned by `Δ(potential) = (n−2) ω_{n−1} g`.

use crate::error::Result;
use crate::numerics::quad::{integrate_adaptive, QuadOpts};
use crate::numerics::special::surface_area;

/// Evaluate the potential of a radial density `g` supported (or truncated)
/// in `[0, outer]` at the radii `rs`.
pub fn newtonian_potential<F: Fn(f64) -> f64>(
    g: F,
    n: u32,
    outer: f64,
    scales: &[f64],
    rs: &[f64],
    opts: QuadOpts,
) -> Result<Vec<f64>> {
    let nf = n as f64;
    let omega = surface_area(n);
    let mut pts: Vec<f64> = vec![0.0];
    let mut s = scales
        .iter()
        .copied()
        .filter(|v| *v > 0.0 && *v < outer)
        .fold(outer, f64::min)
        / 16.0;
    while s < outer {
        pts.push(s);
        s *= 4.0;
    }
    pts.push(outer);

    let mut out = Vec::with_capacity(rs.len());
    for &r in rs {
        let mut cut: Vec<f64> = pts.iter().copied().filter(|p| *p < r).collect();
        cut.push(r.min(outer));
        let inner = if r > 0.0 && cut.len() >= 2 {
            integrate_adaptive(|t| g(t) * t.powf(nf - 1.0), &cut, opts)?
        } else {
            0.0
        };
        let mut rest: Vec<f64> = vec![r.min(outer)];
        rest.extend(pts.iter().copied().filter(|p| *p > r));
        let outer_part = if rest.len() >= 2 {
            integrate_adaptive(|t| g(t) * t, &rest, opts)?
        } else {
            0.0
        };
        let head = if r > 0.0 { r.powf(2.0 - nf) * inner } else { 0.0 };
        out.push(omega * (head + outer_part));
    }
    Ok(out)
}
