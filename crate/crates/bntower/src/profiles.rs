//! Closed-form bubbling profiles on the unit ball.
//!
//! The standard bubble is `U_0(x) = (1 + |x|²/(n(n−2)))^{−(n−2)/2}`, the
//! entire solution of `ΔU = U^{(n+2)/(n−2)}` with `Δ = −Σ∂_i²`. Rescaled
//! copies `U_{μ}(r) = μ^{−(n−2)/2} U_0(r/μ)` concentrate as `μ → 0`; on the
//! ball their Dirichlet projection subtracts the constant boundary trace.
//! The dilation kernel function is
//! `V_0(x) = (|x|²/(n(n−2)) − 1)(1 + |x|²/(n(n−2)))^{−n/2}`, and towers are
//! alternating-sign superpositions with scales `μ_ℓ = t_ℓ ε^{γ_ℓ}`.

use crate::error::{Error, Result};
use crate::numerics::grid::{RadialField, RadialGrid};
use crate::numerics::stable::pow_rational;
use crate::reduced_solver::gamma;
use std::sync::Arc;

/// `2* − 1 = (n+2)/(n−2)`, the exponent of the critical nonlinearity.
pub fn crit_exponent(n: u32) -> f64 {
    (n as f64 + 2.0) / (n as f64 - 2.0)
}

fn a_n(n: u32) -> f64 {
    let nf = n as f64;
    nf * (nf - 2.0)
}

/// `U_0` at radius `rho` from its center.
pub fn u0(n: u32, rho: f64) -> f64 {
    let s = rho * rho / a_n(n);
    (1.0 + s).powf(-(n as f64 - 2.0) / 2.0)
}

/// `U_0'(rho)`.
pub fn u0_d1(n: u32, rho: f64) -> f64 {
    let nf = n as f64;
    let s = rho * rho / a_n(n);
    -(nf - 2.0) * rho / a_n(n) * (1.0 + s).powf(-nf / 2.0)
}

/// `U_0''(rho)`.
pub fn u0_d2(n: u32, rho: f64) -> f64 {
    let nf = n as f64;
    let a = a_n(n);
    let s = rho * rho / a;
    ((nf - 2.0) / a) * (1.0 + s).powf(-nf / 2.0 - 1.0) * ((nf - 1.0) * s - 1.0)
}

/// `ΔU_0` assembled from the derivative formulas (kept separate from the
/// closed-form simplification so the bubble equation is a real check).
pub fn lap_u0(n: u32, rho: f64) -> f64 {
    let nf = n as f64;
    if rho == 0.0 {
        -nf * u0_d2(n, 0.0)
    } else {
        -u0_d2(n, rho) - (nf - 1.0) * u0_d1(n, rho) / rho
    }
}

/// `V_0` at radius `rho`.
pub fn v0(n: u32, rho: f64) -> f64 {
    let s = rho * rho / a_n(n);
    (s - 1.0) * (1.0 + s).powf(-(n as f64) / 2.0)
}

/// `V_0'(rho)`.
pub fn v0_d1(n: u32, rho: f64) -> f64 {
    let nf = n as f64;
    let a = a_n(n);
    let s = rho * rho / a;
    let big_a = (1.0 - nf / 2.0) * s + (1.0 + nf / 2.0);
    (2.0 * rho / a) * (1.0 + s).powf(-nf / 2.0 - 1.0) * big_a
}

/// `V_0''(rho)`.
pub fn v0_d2(n: u32, rho: f64) -> f64 {
    let nf = n as f64;
    let a = a_n(n);
    let p = nf / 2.0;
    let s = rho * rho / a;
    let big_a = (1.0 - p) * s + (1.0 + p);
    let t = 1.0 + s;
    (2.0 / a) * t.powf(-p - 1.0) * big_a
        - (p + 1.0) * (2.0 * rho / a).powi(2) * t.powf(-p - 2.0) * big_a
        + (1.0 - p) * (2.0 * rho / a).powi(2) * t.powf(-p - 1.0)
}

/// `ΔV_0 = (2*−1) U_0^{2*−2} V_0` (closed form; see `lap_v0_direct`).
pub fn lap_v0(n: u32, rho: f64) -> f64 {
    let s = rho * rho / a_n(n);
    crit_exponent(n) * (s - 1.0) * (1.0 + s).powf(-(n as f64) / 2.0 - 2.0)
}

/// `ΔV_0` from the derivative formulas, used to validate `lap_v0`.
pub fn lap_v0_direct(n: u32, rho: f64) -> f64 {
    let nf = n as f64;
    if rho == 0.0 {
        -nf * v0_d2(n, 0.0)
    } else {
        -v0_d2(n, rho) - (nf - 1.0) * v0_d1(n, rho) / rho
    }
}

/// Kernel functions `V_j`, `0 ≤ j ≤ n`, at a point `x ∈ ℝⁿ`.
pub fn kernel_value(j: usize, n: u32, x: &[f64]) -> Result<f64> {
    if j > n as usize {
        return Err(Error::IndexOutOfRange(format!(
            "kernel index {j} exceeds dimension {n}"
        )));
    }
    let rho2: f64 = x.iter().map(|v| v * v).sum();
    if j == 0 {
        Ok(v0(n, rho2.sqrt()))
    } else {
        let s = rho2 / a_n(n);
        Ok(x[j - 1] * (1.0 + s).powf(-(n as f64) / 2.0))
    }
}

/// `∇U_0` at `z`.
pub fn u0_grad(n: u32, z: &[f64]) -> Vec<f64> {
    let s: f64 = z.iter().map(|v| v * v).sum::<f64>() / a_n(n);
    let g = (1.0 + s).powf(-(n as f64) / 2.0);
    z.iter().map(|zj| -zj * g / n as f64).collect()
}

/// Hessian of `U_0` at `z` (row-major n×n).
pub fn u0_hess(n: u32, z: &[f64]) -> Vec<f64> {
    let nf = n as f64;
    let a = a_n(n);
    let s: f64 = z.iter().map(|v| v * v).sum::<f64>() / a;
    let g = (1.0 + s).powf(-nf / 2.0);
    let g1 = (1.0 + s).powf(-nf / 2.0 - 1.0);
    let d = z.len();
    let mut h = vec![0.0; d * d];
    for j in 0..d {
        for m in 0..d {
            let mut v = z[j] * z[m] * g1 / (nf * (nf - 2.0));
            if j == m {
                v -= g / nf;
            }
            h[j * d + m] = v;
        }
    }
    h
}

/// A single rescaled bubble. `center_offset` is the radial coordinate of
/// its center (0 in the radial pipeline).
#[derive(Clone, Copy, Debug)]
pub struct Bubble {
    pub mu: f64,
    pub center_offset: f64,
    pub dim: u32,
}

impl Bubble {
    pub fn new(mu: f64, center_offset: f64, dim: u32) -> Result<Bubble> {
        if !(mu > 0.0) || dim < 7 {
            return Err(Error::InvalidConfig(format!(
                "bubble wants mu > 0 and dim >= 7, got mu={mu}, dim={dim}"
            )));
        }
        Ok(Bubble {
            mu,
            center_offset,
            dim,
        })
    }
}

/// `U_{μ,ξ}(r) = μ^{−(n−2)/2} U_0(|r−ξ|/μ)`.
pub fn bubble_value(b: &Bubble, r: f64) -> f64 {
    let scale = b.mu.powf(-(b.dim as f64 - 2.0) / 2.0);
    scale * u0(b.dim, (r - b.center_offset).abs() / b.mu)
}

/// `ΔU_{μ,ξ}` with analytic second derivatives (off-center bubbles are only
/// evaluated at their own center line, so the 1-d reduction applies).
pub fn bubble_laplacian(b: &Bubble, r: f64) -> f64 {
    let scale = b.mu.powf(-(b.dim as f64 + 2.0) / 2.0);
    scale * lap_u0(b.dim, (r - b.center_offset).abs() / b.mu)
}

/// Result of checking the bubble equation on a grid.
pub struct BubbleResidual {
    pub field: RadialField,
    /// False when the grid has fewer than 8 nodes below `μ` (a warning,
    /// not an error: all derivatives are analytic).
    pub grid_resolves_scale: bool,
}

/// `ΔU_{μ} − U_{μ}^{2*−1}` on the grid; vanishes to round-off.
pub fn bubble_pde_residual(b: &Bubble, grid: &Arc<RadialGrid>) -> BubbleResidual {
    let p = crit_exponent(b.dim);
    let field = RadialField::from_fn(grid.clone(), |r| {
        bubble_laplacian(b, r) - bubble_value(b, r).powf(p)
    });
    BubbleResidual {
        field,
        grid_resolves_scale: grid.resolves_scale(b.mu),
    }
}

/// Projected bubble on the unit ball, centered at the origin:
/// `PU_μ(r) = U_μ(r) − U_μ(1)` (the harmonic extension of the boundary
/// trace of a radial function is its constant boundary value).
pub fn pu_value(mu: f64, n: u32, r: f64) -> f64 {
    let b = Bubble {
        mu,
        center_offset: 0.0,
        dim: n,
    };
    bubble_value(&b, r) - bubble_value(&b, 1.0)
}

pub fn projected_bubble_ball(b: &Bubble, grid: &Arc<RadialGrid>) -> RadialField {
    assert_eq!(
        b.center_offset, 0.0,
        "ball projection is exact only for centered bubbles"
    );
    RadialField::from_fn(grid.clone(), |r| pu_value(b.mu, b.dim, r))
}

/// Projected dilation kernel `Z_{μ}(r) = Y_μ(r) − Y_μ(1)` with
/// `Y_μ(r) = μ^{−(n−2)/2} V_0(r/μ)` (same constant-subtraction rule).
pub fn z_value(mu: f64, n: u32, r: f64) -> f64 {
    let scale = mu.powf(-(n as f64 - 2.0) / 2.0);
    scale * (v0(n, r / mu) - v0(n, 1.0 / mu))
}

/// `ΔZ_μ = ΔY_μ` (the subtracted constant is harmonic).
pub fn z_laplacian(mu: f64, n: u32, r: f64) -> f64 {
    mu.powf(-(n as f64 + 2.0) / 2.0) * lap_v0(n, r / mu)
}

/// Tower parameters: the point of the admissible set `S_{Ω,k}`.
///
/// Scales are `μ_ℓ = t_ℓ ε^{γ_ℓ}` (index 0 is the lowest, widest bubble);
/// centers are `ξ_ℓ = ξ_{ℓ−1} + μ_{ℓ−1} z_ℓ`. The radial pipeline keeps
/// `ξ = 0`, `z = 0`; the offsets are exercised by the analytic reduced
/// system only.
#[derive(Clone, Debug)]
pub struct TowerConfig {
    pub dim: u32,
    pub count: usize,
    pub eps: f64,
    pub t: Vec<f64>,
    /// k−1 offsets `z_2 … z_k`, each an ℝⁿ vector with |z| ≤ 1.
    pub z: Vec<Vec<f64>>,
    /// Anchor point ξ, distance ≥ margin from the boundary.
    pub xi: Vec<f64>,
    /// One sign per bubble; default alternating `(−1)^ℓ`.
    pub signs: Vec<f64>,
    mus: Vec<f64>,
}

/// Default alternating sign pattern `(−1)^ℓ`, ℓ = 1..k.
pub fn alternating_signs(k: usize) -> Vec<f64> {
    (1..=k).map(|l| if l % 2 == 0 { 1.0 } else { -1.0 }).collect()
}

impl TowerConfig {
    pub fn new(
        dim: u32,
        eps: f64,
        t: Vec<f64>,
        z: Vec<Vec<f64>>,
        xi: Vec<f64>,
        signs: Vec<f64>,
    ) -> Result<TowerConfig> {
        let count = t.len();
        if dim < 7 {
            return Err(Error::InvalidConfig(format!(
                "tower needs dim >= 7, got {dim} (the gamma schedule is singular at n = 6)"
            )));
        }
        if !(eps > 0.0) {
            return Err(Error::InvalidConfig("tower needs eps > 0".into()));
        }
        if t.iter().any(|v| !(*v > 0.0)) {
            return Err(Error::InvalidConfig("all t must be positive".into()));
        }
        if z.len() + 1 != count && !(count == 0 && z.is_empty()) {
            return Err(Error::InvalidConfig(format!(
                "need {} offsets z for {} bubbles",
                count.saturating_sub(1),
                count
            )));
        }
        if signs.len() != count || signs.iter().any(|s| s.abs() != 1.0) {
            return Err(Error::InvalidConfig(
                "signs must be one of ±1 per bubble".into(),
            ));
        }
        if xi.len() != dim as usize && !xi.is_empty() {
            return Err(Error::InvalidConfig("anchor xi must have n components".into()));
        }
        for zl in &z {
            if zl.len() != dim as usize {
                return Err(Error::InvalidConfig("offsets z must have n components".into()));
            }
            let norm: f64 = zl.iter().map(|v| v * v).sum::<f64>().sqrt();
            if norm > 1.0 {
                return Err(Error::InvalidConfig(format!("|z| = {norm} exceeds 1")));
            }
        }
        let mus: Vec<f64> = t
            .iter()
            .enumerate()
            .map(|(i, ti)| ti * pow_rational(eps, gamma(dim, i + 1).expect("dim checked")))
            .collect();
        for w in mus.windows(2) {
            if w[1] >= w[0] {
                return Err(Error::InvalidConfig(format!(
                    "scales must decrease strictly: mu {:.3e} then {:.3e} (eps too large for these t)",
                    w[0], w[1]
                )));
            }
        }
        // derived centers must stay interior (margin 1/10)
        let mut dist = xi.iter().map(|v| v * v).sum::<f64>().sqrt();
        for (i, zl) in z.iter().enumerate() {
            let step: f64 = zl.iter().map(|v| v * v).sum::<f64>().sqrt();
            dist += mus[i] * step;
        }
        if !xi.is_empty() && dist > 0.9 {
            return Err(Error::InvalidConfig(format!(
                "derived centers reach distance {dist:.3} from the origin; they must stay interior"
            )));
        }
        Ok(TowerConfig {
            dim,
            count,
            eps,
            t,
            z,
            xi,
            signs,
            mus,
        })
    }

    /// Radial pipeline configuration: centered at the origin, zero offsets,
    /// alternating signs.
    pub fn radial(dim: u32, eps: f64, t: &[f64]) -> Result<TowerConfig> {
        let k = t.len();
        TowerConfig::new(
            dim,
            eps,
            t.to_vec(),
            vec![vec![0.0; dim as usize]; k.saturating_sub(1)],
            vec![0.0; dim as usize],
            alternating_signs(k),
        )
    }

    /// Same tower at a different `eps`.
    pub fn with_eps(&self, eps: f64) -> Result<TowerConfig> {
        TowerConfig::new(
            self.dim,
            eps,
            self.t.clone(),
            self.z.clone(),
            self.xi.clone(),
            self.signs.clone(),
        )
    }

    /// Concentration scales `μ_1 > μ_2 > …` (index 0 = widest bubble).
    pub fn mus(&self) -> &[f64] {
        &self.mus
    }

    /// `θ_ℓ(r) = μ_ℓ + r` in the radial pipeline (0-based index).
    pub fn theta(&self, idx: usize, r: f64) -> f64 {
        self.mus[idx] + r
    }

    pub fn min_scale(&self) -> f64 {
        *self.mus.last().unwrap_or(&1.0)
    }

    pub fn bubble(&self, idx: usize) -> Bubble {
        Bubble {
            mu: self.mus[idx],
            center_offset: 0.0,
            dim: self.dim,
        }
    }
}

/// Nested annuli of influence: `B_1 = Ω`, `B_ℓ = B(0, √(μ_ℓ μ_{ℓ−1}))`,
/// `B_{k+1} = ∅`.
#[derive(Clone, Debug)]
pub struct AnnulusSet {
    /// `radii[ℓ−1]` is the radius of `B_ℓ`, ℓ = 1..=k; a trailing 0 stands
    /// for the empty `B_{k+1}`.
    pub radii: Vec<f64>,
}

impl AnnulusSet {
    /// Shell index (0-based): the `ℓ` with `r ∈ B_{ℓ+1} \ B_{ℓ+2}` …, i.e.
    /// membership in half-open shells `[radius_{ℓ+1}, radius_ℓ)`.
    pub fn shell_of(&self, r: f64) -> usize {
        let k = self.radii.len() - 1;
        for idx in (1..k).rev() {
            if r < self.radii[idx] {
                return idx;
            }
        }
        0
    }

    /// Membership in `B_{idx+1}` (0-based: `contains(0, r)` is all of Ω).
    pub fn contains(&self, idx: usize, r: f64) -> bool {
        r < self.radii[idx]
    }
}

pub fn annuli(cfg: &TowerConfig) -> Result<AnnulusSet> {
    let mus = cfg.mus();
    let mut radii = vec![1.0];
    for l in 1..cfg.count {
        radii.push((mus[l] * mus[l - 1]).sqrt());
    }
    radii.push(0.0);
    for (i, w) in radii.windows(2).enumerate() {
        if w[1] >= w[0] {
            return Err(Error::NonNestedAnnuli {
                ell: i + 2,
                radius: w[1],
                outer: w[0],
            });
        }
    }
    Ok(AnnulusSet { radii })
}

/// Tower value `Σ_ℓ signs_ℓ · PU_{μ_ℓ}` at one radius.
pub fn tower_value(cfg: &TowerConfig, r: f64) -> f64 {
    (0..cfg.count)
        .map(|l| cfg.signs[l] * pu_value(cfg.mus[l], cfg.dim, r))
        .sum()
}

/// The tower ansatz sampled on a grid. Hard error when the grid cannot
/// resolve the top bubble: aliasing there corrupts everything downstream.
pub fn tower_ansatz(cfg: &TowerConfig, grid: &Arc<RadialGrid>) -> Result<RadialField> {
    if cfg.count > 0 && !grid.resolves_scale(cfg.min_scale()) {
        return Err(Error::GridTooCoarse(format!(
            "top bubble scale {:.3e} needs at least 8 nodes below it",
            cfg.min_scale()
        )));
    }
    Ok(RadialField::from_fn(grid.clone(), |r| tower_value(cfg, r)))
}

/// Concentration weight `Ψ_ε(r)`, strictly positive, evaluated per shell:
///
/// * on `B_ℓ \ B_{ℓ+1}`, ℓ ≥ 2:
///   `μ_{ℓ−1}^{1−n/2} (μ_ℓ/θ_ℓ)² + ε μ_{ℓ−1}^{3−n/2}
///    + (θ_{ℓ+1}²/μ_ℓ²) PU_{ℓ+1} · 1{θ_{ℓ+1} ≤ μ_ℓ}`
/// * on the outer region:
///   `μ_1^{(n+2)/2}/θ_1² + (θ_2²/μ_1²) PU_2 · 1{θ_2 ≤ μ_1}`
///
/// Power combinations are assembled in log scale: `μ^{1−n/2}` alone spans
/// ~20 orders of magnitude for deep towers.
pub fn weight_psi(cfg: &TowerConfig, r: f64) -> f64 {
    assert!(cfg.count >= 1, "weight needs at least one bubble");
    let nf = cfg.dim as f64;
    let mus = cfg.mus();
    let k = cfg.count;
    // shell from the (valid) radii without re-erroring
    let mut shell = 0usize;
    for idx in (1..k).rev() {
        if r < (mus[idx] * mus[idx - 1]).sqrt() {
            shell = idx;
            break;
        }
    }
    let ln_mu: Vec<f64> = mus.iter().map(|m| m.ln()).collect();
    let theta = |idx: usize| mus[idx] + r;
    let mut psi;
    if shell == 0 {
        // μ_1^{(n+2)/2} / θ_1²
        psi = ((nf + 2.0) / 2.0 * ln_mu[0] - 2.0 * theta(0).ln()).exp();
        if k >= 2 && theta(1) <= mus[0] {
            let pu = pu_value(mus[1], cfg.dim, r);
            psi += (2.0 * (theta(1).ln() - ln_mu[0])).exp() * pu;
        }
    } else {
        let l = shell; // 0-based, so μ_{ℓ−1} = mus[l-1]
        psi = ((1.0 - nf / 2.0) * ln_mu[l - 1] + 2.0 * (ln_mu[l] - theta(l).ln())).exp();
        psi += cfg.eps * ((3.0 - nf / 2.0) * ln_mu[l - 1]).exp();
        if l + 1 < k && theta(l + 1) <= mus[l] {
            let pu = pu_value(mus[l + 1], cfg.dim, r);
            psi += (2.0 * (theta(l + 1).ln() - ln_mu[l])).exp() * pu;
        }
    }
    psi
}
