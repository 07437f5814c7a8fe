//! The nonlinear step of the construction: the ansatz residual `R_ε`, the
//! weighted Picard fixed point for the remainder `φ`, numerical extraction
//! of the kernel coefficients `ν_{ℓ,0}`, their analytic leading terms, and
//! the constants `D1, D2, D3`.
//!
//! `D3 = ∫ U_0^{2*−1}` and the kernel norms come from quadrature. `D1, D2`
//! are never copied from the literature: they are identified by fitting
//! the ball energy `J_ε(PU_{μ,0})` to `c₀ + c_a εμ² + c_b μ^{n−2}` and
//! mapping the slopes so that the `ℓ = 1` leading term of the kernel
//! coefficient is the `(2/(n−2)) μ ∂_μ` derivative of the fitted model.

use crate::error::{Error, Result};
use crate::greens::RobinResult;
use crate::linear_theory::ProjectedSolver;
use crate::numerics::grid::{RadialField, RadialGrid};
use crate::numerics::quad::{radial_integral, radial_integral_to, QuadOpts};
use crate::numerics::solve::solve_dense;
use crate::numerics::special::surface_area;
use crate::numerics::stable::{f_crit, f_diff, f_quad_remainder, pow_rational};
use crate::profiles::{
    bubble_value, crit_exponent, pu_value, tower_value, u0, u0_d1, u0_grad, v0_d1,
    weight_psi, z_laplacian, z_value, Bubble, TowerConfig,
};
use crate::reduced_solver::gamma;
use nalgebra::{DMatrix, DVector};
use num_rational::Ratio;

/// Where a constant came from.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Provenance {
    Fit,
    Quadrature,
}

/// The constants of the reduced system.
#[derive(Clone, Debug)]
pub struct ReducedCoefficients {
    pub d1: f64,
    pub d2: f64,
    pub d3: f64,
    /// `‖∇V_j‖²_{L²(ℝⁿ)}`, index 0..=n (all j ≥ 1 coincide by symmetry).
    pub grad_v_norms: Vec<f64>,
    /// Relative residual of the energy fit (against the spread of J).
    pub fit_residual: f64,
    pub fit_condition: f64,
    pub provenance: Provenance,
    /// Fitted `ε → 0, μ → 0` energy plateau (a diagnostic).
    pub energy_c0: f64,
}

/// `Σ_ℓ s_ℓ U_ℓ^{2*−1}(r)` with the dominant bubble's contribution split
/// out so the difference against `f(W)` can be formed stably.
fn dominant_bubble(cfg: &TowerConfig, r: f64) -> usize {
    let mut best = 0;
    let mut val = f64::NEG_INFINITY;
    for l in 0..cfg.count {
        let u = bubble_value(&cfg.bubble(l), r);
        if u > val {
            val = u;
            best = l;
        }
    }
    best
}

/// Pointwise ansatz residual `R_ε = (Δ−ε) W − f(W)`, `W = Σ s_ℓ PU_ℓ`.
///
/// `Δ PU_ℓ = U_ℓ^{2*−1}` exactly (the projection subtracts a constant), so
/// only the ε term and the nonlinearity carry floating point; near a
/// bubble core the difference `f(s_K U_K) − f(W)` is 20+ digits below its
/// operands and is expanded relatively, never subtracted naively.
pub fn residual_r_value(cfg: &TowerConfig, r: f64) -> f64 {
    residual_value_impl(cfg, r, true)
}

fn residual_value_impl(cfg: &TowerConfig, r: f64, projected: bool) -> f64 {
    let p = crit_exponent(cfg.dim);
    if cfg.count == 0 {
        return 0.0;
    }
    let kdom = dominant_bubble(cfg, r);
    let w_dom = cfg.signs[kdom] * bubble_value(&cfg.bubble(kdom), r);
    // v = W − s_K U_K
    let mut v = 0.0;
    let mut w_total = w_dom;
    for l in 0..cfg.count {
        if l != kdom {
            let pu = if projected {
                pu_value(cfg.mus()[l], cfg.dim, r)
            } else {
                bubble_value(&cfg.bubble(l), r)
            };
            v += cfg.signs[l] * pu;
            w_total += cfg.signs[l] * pu;
        }
    }
    if projected {
        let c = bubble_value(&cfg.bubble(kdom), 1.0);
        v -= cfg.signs[kdom] * c;
        w_total -= cfg.signs[kdom] * c;
    }
    let mut out = -f_diff(w_dom, v, p); // f(w) − f(w+v)
    for l in 0..cfg.count {
        if l != kdom {
            out += cfg.signs[l] * f_crit(bubble_value(&cfg.bubble(l), r), p);
        }
    }
    out - cfg.eps * w_total
}

/// The residual sampled on a grid.
pub fn residual_r(cfg: &TowerConfig, grid: &std::sync::Arc<RadialGrid>) -> Result<RadialField> {
    if cfg.count > 0 && !grid.resolves_scale(cfg.min_scale()) {
        return Err(Error::GridTooCoarse(format!(
            "residual needs >= 8 nodes below mu_k = {:.3e}",
            cfg.min_scale()
        )));
    }
    Ok(RadialField::from_fn(grid.clone(), |r| {
        residual_r_value(cfg, r)
    }))
}

#[cfg(test)]
pub(crate) fn residual_unprojected_value(cfg: &TowerConfig, r: f64) -> f64 {
    residual_value_impl(cfg, r, false)
}

/// Options for the weighted Picard iteration.
#[derive(Clone, Copy, Debug)]
pub struct PicardOptions {
    /// Convergence in `‖φ_{m+1} − φ_m‖_*`.
    pub tol: f64,
    pub max_iterations: usize,
}

impl Default for PicardOptions {
    fn default() -> Self {
        PicardOptions {
            tol: 1e-10,
            max_iterations: 40,
        }
    }
}

/// Outcome of the fixed-point construction of the remainder.
#[derive(Clone, Debug)]
pub struct PicardReport {
    pub phi: RadialField,
    pub iterations: usize,
    /// `‖φ_{m+1}−φ_m‖_* / ‖φ_m−φ_{m−1}‖_*` per iteration (from m = 1).
    pub contraction_estimates: Vec<f64>,
    pub final_weighted_norm: f64,
    /// Multipliers of every inner linear solve.
    pub multipliers: Vec<Vec<f64>>,
    /// Orthogonality cosines of the final iterate.
    pub orthogonality: Vec<f64>,
    /// True when the iteration stagnated at the weighted-norm noise floor
    /// of the inner solver (relative displacement below 1e−4) instead of
    /// reaching the absolute tolerance; the fixed point is still converged
    /// to everything the extraction consumes.
    pub stalled_at_floor: bool,
}

fn star_norm(cfg: &TowerConfig, field: &RadialField) -> f64 {
    if cfg.count == 0 {
        return field.sup_norm();
    }
    field
        .grid
        .nodes
        .iter()
        .zip(&field.values)
        .map(|(&r, &v)| v.abs() / weight_psi(cfg, r))
        .fold(0.0f64, f64::max)
}

/// Iterate `φ_{m+1} = L_ε(−R_ε + N(φ_m))` from `φ_0 = 0` in the weighted
/// sup norm, where `N(φ) = f(W+φ) − f(W) − f'(W) φ`.
pub fn picard_solve(
    cfg: &TowerConfig,
    grid: &std::sync::Arc<RadialGrid>,
    opts: PicardOptions,
) -> Result<PicardReport> {
    let p = crit_exponent(cfg.dim);
    if cfg.count == 0 {
        // W ≡ 0, R_ε ≡ 0: the fixed point is φ = 0 immediately
        return Ok(PicardReport {
            phi: RadialField::zeros(grid.clone()),
            iterations: 0,
            contraction_estimates: vec![],
            final_weighted_norm: 0.0,
            multipliers: vec![],
            orthogonality: vec![],
            stalled_at_floor: false,
        });
    }
    let solver = ProjectedSolver::new(cfg, grid)?;
    let r_eps = residual_r(cfg, grid)?;
    let w: Vec<f64> = grid.nodes.iter().map(|&r| tower_value(cfg, r)).collect();
    let mut phi = RadialField::zeros(grid.clone());
    let mut multipliers = Vec::new();
    let mut contraction_estimates = Vec::new();
    let mut last_delta: Option<f64> = None;
    let mut bad_streak = 0usize;
    let mut stall_streak = 0usize;
    for it in 0..opts.max_iterations {
        let rhs = RadialField::new(
            grid.clone(),
            (0..grid.len())
                .map(|i| -r_eps.values[i] + f_quad_remainder(w[i], phi.values[i], p))
                .collect(),
        );
        let out = solver.solve(&rhs)?;
        let delta_field = RadialField::new(
            grid.clone(),
            out.phi
                .values
                .iter()
                .zip(&phi.values)
                .map(|(a, b)| a - b)
                .collect(),
        );
        let delta = star_norm(cfg, &delta_field);
        let phi_norm = star_norm(cfg, &out.phi);
        let delta_rel = delta / phi_norm.max(f64::MIN_POSITIVE);
        multipliers.push(out.lambda.clone());
        if let Some(prev) = last_delta {
            if prev > 0.0 {
                let est = delta / prev;
                contraction_estimates.push(est);
                if est >= 1.0 && delta_rel > 1e-4 {
                    bad_streak += 1;
                    if bad_streak >= 3 {
                        return Err(Error::PicardDiverged {
                            iteration: it,
                            estimates: contraction_estimates,
                        });
                    }
                } else {
                    bad_streak = 0;
                }
                // stagnation at negligible relative displacement: the
                // solver's weighted-norm noise floor, not divergence
                if est >= 0.7 && delta_rel <= 1e-4 {
                    stall_streak += 1;
                } else {
                    stall_streak = 0;
                }
            }
        }
        let orthogonality = out.orthogonality.clone();
        phi = out.phi;
        if delta <= opts.tol || stall_streak >= 3 {
            let final_weighted_norm = star_norm(cfg, &phi);
            return Ok(PicardReport {
                phi,
                iterations: it + 1,
                contraction_estimates,
                final_weighted_norm,
                multipliers,
                orthogonality,
                stalled_at_floor: delta > opts.tol,
            });
        }
        last_delta = Some(delta);
    }
    Err(Error::NewtonDivergence {
        iterations: opts.max_iterations,
        final_residual: last_delta.unwrap_or(f64::NAN),
        history: contraction_estimates,
    })
}

/// Apply the Picard map once to a candidate fixed point and report the
/// displacement in `‖·‖_*` (the re-application defect).
pub fn picard_reapply_defect(
    cfg: &TowerConfig,
    grid: &std::sync::Arc<RadialGrid>,
    phi: &RadialField,
) -> Result<f64> {
    let p = crit_exponent(cfg.dim);
    let solver = ProjectedSolver::new(cfg, grid)?;
    let r_eps = residual_r(cfg, grid)?;
    let rhs = RadialField::new(
        grid.clone(),
        (0..grid.len())
            .map(|i| {
                -r_eps.values[i]
                    + f_quad_remainder(tower_value(cfg, grid.nodes[i]), phi.values[i], p)
            })
            .collect(),
    );
    let out = solver.solve(&rhs)?;
    let delta = RadialField::new(
        grid.clone(),
        out.phi
            .values
            .iter()
            .zip(&phi.values)
            .map(|(a, b)| a - b)
            .collect(),
    );
    Ok(star_norm(cfg, &delta))
}

/// Numeric and analytic kernel coefficients.
#[derive(Clone, Debug)]
pub struct NuExtraction {
    /// Extracted `ν_{ℓ,0}` per bubble.
    pub nu: Vec<f64>,
    /// Analytic leading terms of `ν_{ℓ,0}`.
    pub nu_analytic: Vec<f64>,
    /// `nu / nu_analytic`.
    pub ratios: Vec<f64>,
}

/// Kernel moments `b_m = ∫ [(Δ−ε)(W+φ) − f(W+φ)] Z_m` without numerically
/// differentiating `φ`: the `(Δ−ε)φ` part is moved onto `Z_m` by parts
/// (both vanish on the boundary) where `(Δ−ε)Z_m` is analytic.
pub fn kernel_moments(
    cfg: &TowerConfig,
    grid: &std::sync::Arc<RadialGrid>,
    phi: &RadialField,
) -> Result<Vec<f64>> {
    let p = crit_exponent(cfg.dim);
    let weights = grid.quad_weights();
    let mus = cfg.mus();
    let mut b = vec![0.0; cfg.count];
    for (i, &r) in grid.nodes.iter().enumerate() {
        let w = tower_value(cfg, r);
        let head = residual_r_value(cfg, r) - f_diff(w, phi.values[i], p);
        for (m, bm) in b.iter_mut().enumerate() {
            let z = z_value(mus[m], cfg.dim, r);
            let col = z_laplacian(mus[m], cfg.dim, r) - cfg.eps * z;
            *bm += weights[i] * (head * z + phi.values[i] * col);
        }
    }
    Ok(b)
}

/// Gram matrix `⟨Z_ℓ, Z_m⟩ = ∫_B ∇Z_ℓ·∇Z_m` by adaptive quadrature of the
/// analytic integrand `ΔY_ℓ (Y_m − Y_m(1))`.
pub fn kernel_gram(cfg: &TowerConfig) -> Result<DMatrix<f64>> {
    let k = cfg.count;
    let mus = cfg.mus();
    let mut g = DMatrix::zeros(k, k);
    for l in 0..k {
        for m in l..k {
            let v = radial_integral_to(
                |r| z_laplacian(mus[l], cfg.dim, r) * z_value(mus[m], cfg.dim, r),
                cfg.dim,
                1.0,
                &[mus[l], mus[m]],
                QuadOpts {
                    abs_tol: 1e-300,
                    rel_tol: 1e-11,
                    max_panels: 40_000,
                },
            )?;
            g[(l, m)] = v;
            g[(m, l)] = v;
        }
    }
    Ok(g)
}

/// Solve the Gram system for `ν` from a precomputed moment vector.
pub fn nu_from_moments(cfg: &TowerConfig, moments: &[f64]) -> Result<Vec<f64>> {
    let g = kernel_gram(cfg)?;
    let b = DVector::from_column_slice(moments);
    let nu = solve_dense(&g, &b).map_err(|_| {
        Error::SingularMatrix("kernel gram matrix singular (degenerate scales)".into())
    })?;
    Ok(nu.iter().copied().collect())
}

/// Extract `ν_{ℓ,0}` from a converged remainder and compare with the
/// analytic leading terms.
pub fn extract_nu(
    cfg: &TowerConfig,
    grid: &std::sync::Arc<RadialGrid>,
    phi: &RadialField,
    coeffs: &ReducedCoefficients,
    robin: &RobinResult,
) -> Result<NuExtraction> {
    let b = kernel_moments(cfg, grid, phi)?;
    let nu = nu_from_moments(cfg, &b)?;
    let rows = analytic_nu(cfg, coeffs, robin)?;
    let nu_analytic: Vec<f64> = rows.iter().map(|r| r[0]).collect();
    let ratios = nu
        .iter()
        .zip(&nu_analytic)
        .map(|(a, b)| a / b)
        .collect();
    Ok(NuExtraction {
        nu,
        nu_analytic,
        ratios,
    })
}

/// Analytic leading-order kernel coefficients; `rows[ℓ][j]`, `j = 0..=n`.
///
/// * `ℓ = 1`:  `‖∇V_0‖² ν = ε^{1+2γ_1} (−(4D1/(n−2)) t² + 2D2 t^{n−2} H)`,
///   and `‖∇V_j‖² ν = ε^{1+3γ_1} n D2 t^{n−1} ∂_j H`.
/// * `ℓ ≥ 2`:  `‖∇V_0‖² ν = ε^{1+2γ_ℓ} (−(4D1/(n−2)) t_ℓ²
///   + D3 (t_ℓ/t_{ℓ−1})^{(n−2)/2} U_0(z_ℓ))`, and
///   `‖∇V_j‖² ν = ε^{n/2(γ_ℓ−γ_{ℓ−1})} n D3 (t_ℓ/t_{ℓ−1})^{n/2} ∂_j U_0(z_ℓ)`.
pub fn analytic_nu(
    cfg: &TowerConfig,
    coeffs: &ReducedCoefficients,
    robin: &RobinResult,
) -> Result<Vec<Vec<f64>>> {
    let n = cfg.dim;
    let nf = n as f64;
    let d = n as usize;
    let mut rows = Vec::with_capacity(cfg.count);
    for l in 0..cfg.count {
        let ell = l + 1;
        let t = cfg.t[l];
        let g_l = gamma(n, ell)?;
        let mut row = vec![0.0; d + 1];
        if l == 0 {
            let e0 = pow_rational(
                cfg.eps,
                Ratio::from_integer(1) + Ratio::from_integer(2) * g_l,
            );
            row[0] = e0
                * (-(4.0 * coeffs.d1 / (nf - 2.0)) * t * t
                    + 2.0 * coeffs.d2 * t.powf(nf - 2.0) * robin.value)
                / coeffs.grad_v_norms[0];
            let ej = pow_rational(
                cfg.eps,
                Ratio::from_integer(1) + Ratio::from_integer(3) * g_l,
            );
            for j in 0..d {
                row[j + 1] = ej * nf * coeffs.d2 * t.powf(nf - 1.0) * robin.gradient[j]
                    / coeffs.grad_v_norms[j + 1];
            }
        } else {
            let g_prev = gamma(n, ell - 1)?;
            let rho = t / cfg.t[l - 1];
            let z = &cfg.z[l - 1];
            let zn: f64 = z.iter().map(|v| v * v).sum::<f64>().sqrt();
            let e0 = pow_rational(
                cfg.eps,
                Ratio::from_integer(1) + Ratio::from_integer(2) * g_l,
            );
            row[0] = e0
                * (-(4.0 * coeffs.d1 / (nf - 2.0)) * t * t
                    + coeffs.d3 * rho.powf((nf - 2.0) / 2.0) * u0(n, zn))
                / coeffs.grad_v_norms[0];
            let ej = pow_rational(cfg.eps, Ratio::new(n as i64, 2) * (g_l - g_prev));
            let grad = u0_grad(n, z);
            for j in 0..d {
                row[j + 1] = ej * nf * coeffs.d3 * rho.powf(nf / 2.0) * grad[j]
                    / coeffs.grad_v_norms[j + 1];
            }
        }
        rows.push(row);
    }
    Ok(rows)
}

/// Grids for the energy fit.
#[derive(Clone, Debug)]
pub struct FitOptions {
    pub mu_grid: Vec<f64>,
    pub eps_grid: Vec<f64>,
    /// Gate on the relative fit residual (against the spread of J).
    pub residual_limit: f64,
}

impl Default for FitOptions {
    fn default() -> Self {
        FitOptions {
            mu_grid: vec![0.002, 0.0028, 0.004, 0.0056, 0.008],
            eps_grid: vec![0.05, 0.1, 0.2, 0.4],
            residual_limit: 1e-3,
        }
    }
}

/// Ball energy `J_ε(PU_{μ,0}) = ½∫(|∇PU|² − ε PU²) − (1/2*)∫ PU^{2*}`.
pub fn ball_energy(n: u32, mu: f64, eps: f64) -> Result<f64> {
    let opts = QuadOpts {
        abs_tol: 1e-300,
        rel_tol: 1e-13,
        max_panels: 60_000,
    };
    let b = Bubble {
        mu,
        center_offset: 0.0,
        dim: n,
    };
    let two_star = 2.0 * n as f64 / (n as f64 - 2.0);
    let grad = radial_integral_to(
        |r| {
            let d = mu.powf(-(n as f64) / 2.0) * u0_d1(n, r / mu);
            d * d
        },
        n,
        1.0,
        &[mu],
        opts,
    )?;
    let l2 = radial_integral_to(
        |r| {
            let v = bubble_value(&b, r) - bubble_value(&b, 1.0);
            v * v
        },
        n,
        1.0,
        &[mu],
        opts,
    )?;
    let crit = radial_integral_to(
        |r| (bubble_value(&b, r) - bubble_value(&b, 1.0)).powf(two_star),
        n,
        1.0,
        &[mu],
        opts,
    )?;
    Ok(0.5 * (grad - eps * l2) - crit / two_star)
}

/// Fit `D1, D2` from the energy expansion and compute `D3` and the kernel
/// norms by quadrature.
pub fn fit_constants(n: u32) -> Result<ReducedCoefficients> {
    fit_constants_with(n, &FitOptions::default())
}

pub fn fit_constants_with(n: u32, opts: &FitOptions) -> Result<ReducedCoefficients> {
    let nf = n as f64;
    let tight = QuadOpts::tight();
    let p = crit_exponent(n);
    let d3 = radial_integral(|r| u0(n, r).powf(p), n, &[nf.sqrt() * 2.0], tight)?;

    let mut grad_v_norms = vec![0.0; n as usize + 1];
    grad_v_norms[0] = radial_integral(|r| v0_d1(n, r).powi(2), n, &[nf.sqrt() * 2.0], tight)?;
    // |∇V_j|² integrates to ∫ g² + (r²/n)(g'² + 2 g g'/r), g = (1+s)^{−n/2}
    let a = nf * (nf - 2.0);
    let vj = radial_integral(
        |r| {
            let s = r * r / a;
            let g = (1.0 + s).powf(-nf / 2.0);
            let gp = -nf * r / a * (1.0 + s).powf(-nf / 2.0 - 1.0);
            g * g + r * r / nf * (gp * gp + 2.0 * g * gp / r.max(1e-300))
        },
        n,
        &[nf.sqrt() * 2.0],
        tight,
    )?;
    for j in 1..=n as usize {
        grad_v_norms[j] = vj;
    }

    // energy fit J(μ,ε) ≈ c0 + c_a εμ² + c_b μ^{n−2}, with the two known
    // next-order corrections ε μ^{n−2} and μ^n carried as explicit columns:
    // the bare three-term model's truncation error exceeds the 1e-4
    // coefficient reproducibility this fit must deliver. Columns are
    // scaled to unit norm for conditioning.
    let rows = opts.mu_grid.len() * opts.eps_grid.len();
    let ncols = 5;
    let mut design = DMatrix::zeros(rows, ncols);
    let mut y = DVector::zeros(rows);
    let mut at = 0;
    for &mu in &opts.mu_grid {
        for &eps in &opts.eps_grid {
            design[(at, 0)] = 1.0;
            design[(at, 1)] = eps * mu * mu;
            design[(at, 2)] = mu.powf(nf - 2.0);
            design[(at, 3)] = eps * mu.powf(nf - 2.0);
            design[(at, 4)] = mu.powf(nf);
            y[at] = ball_energy(n, mu, eps)?;
            at += 1;
        }
    }
    let mut col_norms = vec![0.0f64; ncols];
    for j in 0..ncols {
        col_norms[j] = design.column(j).norm();
        for i in 0..rows {
            design[(i, j)] /= col_norms[j];
        }
    }
    let svd = design.clone().svd(true, true);
    let cond = svd.singular_values.max() / svd.singular_values.min();
    let sol = svd
        .solve(&y, 1e-14)
        .map_err(|e| Error::SingularMatrix(e.to_string()))?;
    let resid = (&design * &sol - &y).amax();
    let spread = {
        let mut lo = f64::INFINITY;
        let mut hi = f64::NEG_INFINITY;
        for v in y.iter() {
            lo = lo.min(*v);
            hi = hi.max(*v);
        }
        (hi - lo).max(1e-300)
    };
    let rel_resid = resid / spread;
    if rel_resid > opts.residual_limit {
        return Err(Error::FitRejected {
            residual: rel_resid,
            limit: opts.residual_limit,
            cond,
        });
    }
    let c0 = sol[0] / col_norms[0];
    let c_a = sol[1] / col_norms[1];
    let c_b = sol[2] / col_norms[2];
    // sign convention: the ℓ = 1 analytic row is (2/(n−2)) μ∂_μ of the
    // fitted model, i.e. (4 c_a/(n−2)) εμ² + 2 c_b μ^{n−2}, matched against
    // −(4D1/(n−2)) t² + 2 D2 t^{n−2} H(0,0)
    let h00 = 1.0 / ((nf - 2.0) * surface_area(n));
    let d1 = -c_a;
    let d2 = c_b / h00;
    if !(d1 > 0.0 && d2 > 0.0) {
        return Err(Error::FitRejected {
            residual: rel_resid,
            limit: opts.residual_limit,
            cond,
        });
    }
    Ok(ReducedCoefficients {
        d1,
        d2,
        d3,
        grad_v_norms,
        fit_residual: rel_resid,
        fit_condition: cond,
        provenance: Provenance::Fit,
        energy_c0: c0,
    })
}
