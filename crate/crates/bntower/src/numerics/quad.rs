//! Adaptive Gauss quadrature on log-graded panels and the radially reduced
//! integral `∫_{ℝⁿ} f(|x|) dx = ω_{n−1} ∫ f(r) r^{n−1} dr`, with improper
//! tails handled by the substitution `r → 1/s`.

use crate::error::{Error, Result};
use crate::numerics::special::surface_area;
use std::cmp::Ordering;
use std::collections::BinaryHeap;

/// Gauss-Legendre rule on [-1, 1].
#[derive(Clone, Debug)]
pub struct GaussRule {
    pub nodes: Vec<f64>,
    pub weights: Vec<f64>,
}

impl GaussRule {
    /// Nodes by Newton iteration on the Legendre recurrence.
    pub fn legendre(order: usize) -> GaussRule {
        assert!(order >= 2);
        let m = order;
        let mut nodes = vec![0.0; m];
        let mut weights = vec![0.0; m];
        for k in 0..m {
            let mut x = (std::f64::consts::PI * (k as f64 + 0.75) / (m as f64 + 0.5)).cos();
            for _ in 0..100 {
                let (p, dp) = legendre_eval(m, x);
                let dx = p / dp;
                x -= dx;
                if dx.abs() < 1e-16 {
                    break;
                }
            }
            let (_, dp) = legendre_eval(m, x);
            nodes[k] = x;
            weights[k] = 2.0 / ((1.0 - x * x) * dp * dp);
        }
        GaussRule { nodes, weights }
    }

    pub fn integrate<F: FnMut(f64) -> f64>(&self, a: f64, b: f64, f: &mut F) -> f64 {
        let mid = 0.5 * (a + b);
        let half = 0.5 * (b - a);
        let mut acc = 0.0;
        for (x, w) in self.nodes.iter().zip(&self.weights) {
            acc += w * f(mid + half * x);
        }
        acc * half
    }
}

fn legendre_eval(m: usize, x: f64) -> (f64, f64) {
    let mut p0 = 1.0;
    let mut p1 = x;
    for j in 2..=m {
        let jf = j as f64;
        let p2 = ((2.0 * jf - 1.0) * x * p1 - (jf - 1.0) * p0) / jf;
        p0 = p1;
        p1 = p2;
    }
    let dp = m as f64 * (x * p1 - p0) / (x * x - 1.0);
    (p1, dp)
}

/// Tolerances for adaptive quadrature: converged when the summed panel
/// error estimate drops below `abs` or `rel`·|integral|, whichever is first.
#[derive(Clone, Copy, Debug)]
pub struct QuadOpts {
    pub abs_tol: f64,
    pub rel_tol: f64,
    pub max_panels: usize,
}

impl Default for QuadOpts {
    fn default() -> Self {
        QuadOpts {
            abs_tol: 1e-10,
            rel_tol: 1e-9,
            max_panels: 20_000,
        }
    }
}

impl QuadOpts {
    pub fn tight() -> Self {
        QuadOpts {
            abs_tol: 1e-300,
            rel_tol: 1e-12,
            max_panels: 60_000,
        }
    }
}

struct Panel {
    a: f64,
    b: f64,
    value: f64,
    err: f64,
}

impl PartialEq for Panel {
    fn eq(&self, other: &Self) -> bool {
        self.err == other.err
    }
}
impl Eq for Panel {}
impl PartialOrd for Panel {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}
impl Ord for Panel {
    fn cmp(&self, other: &Self) -> Ordering {
        self.err.partial_cmp(&other.err).unwrap_or(Ordering::Equal)
    }
}

fn eval_panel<F: FnMut(f64) -> f64>(rule: &GaussRule, fine: &GaussRule, a: f64, b: f64, f: &mut F) -> Panel {
    let coarse = rule.integrate(a, b, f);
    let m = 0.5 * (a + b);
    let value = fine.integrate(a, m, f) + fine.integrate(m, b, f);
    Panel {
        a,
        b,
        value,
        err: (value - coarse).abs(),
    }
}

/// Greedy adaptive quadrature over seeded panel boundaries: the worst panel
/// is bisected until the global error estimate meets the tolerance.
pub fn integrate_adaptive<F: FnMut(f64) -> f64>(
    mut f: F,
    breakpoints: &[f64],
    opts: QuadOpts,
) -> Result<f64> {
    assert!(breakpoints.len() >= 2);
    let rule = GaussRule::legendre(15);
    let fine = GaussRule::legendre(15);
    let mut heap = BinaryHeap::new();
    let mut total = 0.0;
    let mut total_err = 0.0;
    for w in breakpoints.windows(2) {
        if w[1] <= w[0] {
            continue;
        }
        let p = eval_panel(&rule, &fine, w[0], w[1], &mut f);
        total += p.value;
        total_err += p.err;
        heap.push(p);
    }
    let mut n_panels = heap.len();
    loop {
        let tol = opts.abs_tol.max(opts.rel_tol * total.abs());
        if total_err <= tol || heap.is_empty() {
            return Ok(total);
        }
        if n_panels >= opts.max_panels {
            return Err(Error::Quadrature(format!(
                "no convergence with {n_panels} panels: error estimate {total_err:.3e}, target {tol:.3e}"
            )));
        }
        let worst = heap.pop().unwrap();
        total -= worst.value;
        total_err -= worst.err;
        let m = 0.5 * (worst.a + worst.b);
        if !(worst.a < m && m < worst.b) {
            // panel at roundoff width: accept as is
            total += worst.value;
            continue;
        }
        for (a, b) in [(worst.a, m), (m, worst.b)] {
            let p = eval_panel(&rule, &fine, a, b, &mut f);
            total += p.value;
            total_err += p.err;
            heap.push(p);
        }
        n_panels += 1;
    }
}

fn log_breakpoints(inner: f64, outer: f64) -> Vec<f64> {
    let mut pts = vec![0.0, inner];
    let mut r = inner;
    while r * 4.0 < outer {
        r *= 4.0;
        pts.push(r);
    }
    pts.push(outer);
    pts
}

/// `ω_{n−1} ∫_0^R f(r) r^{n−1} dr` with panels graded towards the listed
/// interior `scales`.
pub fn radial_integral_to<F: FnMut(f64) -> f64>(
    mut f: F,
    n: u32,
    radius: f64,
    scales: &[f64],
    opts: QuadOpts,
) -> Result<f64> {
    let nf = n as f64;
    let inner = scales
        .iter()
        .copied()
        .filter(|s| *s > 0.0 && *s < radius)
        .fold(radius, f64::min)
        / 16.0;
    let mut pts = log_breakpoints(inner.min(radius / 4.0), radius);
    for &s in scales {
        if s > 0.0 && s < radius {
            pts.push(s);
        }
    }
    pts.sort_by(|a, b| a.partial_cmp(b).unwrap());
    pts.dedup();
    let value = integrate_adaptive(|r| f(r) * r.powf(nf - 1.0), &pts, opts)?;
    Ok(surface_area(n) * value)
}

/// `ω_{n−1} ∫_0^∞ f(r) r^{n−1} dr`. The far field is mapped to `[0, 1/R]`
/// by `r = 1/s`; a decay estimate on `f` guards convergence first.
pub fn radial_integral<F: FnMut(f64) -> f64>(
    mut f: F,
    n: u32,
    scales: &[f64],
    opts: QuadOpts,
) -> Result<f64> {
    let nf = n as f64;
    let scale_max = scales.iter().copied().fold(1.0f64, f64::max);
    let split = 100.0 * scale_max;

    // tail estimate: f ~ r^{-p} must have p > n
    let f1 = f(split).abs();
    let f2 = f(4.0 * split).abs();
    if f1 != 0.0 {
        let p = (f1 / f2.max(f64::MIN_POSITIVE)).ln() / 4.0f64.ln();
        if p <= nf {
            return Err(Error::NonConvergentTail { decay: p, needed: nf });
        }
    }

    let inner_part = radial_integral_to(&mut f, n, split, scales, opts)?;
    let tail_pts: Vec<f64> = log_breakpoints(1e-6 / split, 1.0 / split);
    let tail = integrate_adaptive(
        |s| {
            if s == 0.0 {
                0.0
            } else {
                f(1.0 / s) * s.powf(-nf - 1.0)
            }
        },
        &tail_pts,
        opts,
    )?;
    Ok(inner_part + surface_area(n) * tail)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn gauss_rule_exactness() {
        let rule = GaussRule::legendre(8);
        // degree-15 polynomial integrated exactly
        let mut f = |x: f64| x.powi(15) + 3.0 * x.powi(14) + x.powi(3) - 2.0;
        let got = rule.integrate(-1.0, 1.0, &mut f);
        let exact = 2.0 * (3.0 / 15.0) - 4.0;
        assert!((got - exact).abs() < 1e-13);
    }

    #[test]
    fn adaptive_handles_sharp_peak() {
        // ∫_0^1 1/sqrt(r) dr = 2 with a singular-ish integrand
        let v = integrate_adaptive(|r: f64| 1.0 / r.max(1e-300).sqrt(), &[0.0, 1e-8, 1.0], QuadOpts::default()).unwrap();
        assert!((v - 2.0).abs() < 1e-7);
    }

    #[test]
    fn gaussian_volume_in_dimension_7() {
        // ∫_{ℝ⁷} e^{-|x|²} dx = π^{7/2}
        let got = radial_integral(|r| (-r * r).exp(), 7, &[1.0], QuadOpts::default()).unwrap();
        let exact = std::f64::consts::PI.powf(3.5);
        assert!(((got - exact) / exact).abs() < 1e-10);
    }

    #[test]
    fn zero_integrand() {
        let got = radial_integral(|_| 0.0, 7, &[1.0], QuadOpts::default()).unwrap();
        assert_eq!(got, 0.0);
    }

    #[test]
    fn tail_divergence_detected() {
        let err = radial_integral(|r| 1.0 / (1.0 + r * r), 7, &[1.0], QuadOpts::default());
        assert!(matches!(err, Err(Error::NonConvergentTail { .. })));
    }
}
