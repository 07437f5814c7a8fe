//! The projected linear problem around a tower: solve
//! `(Δ − ε − (2*−1)|W|^{2*−2}) φ = k_rhs + Σ_ℓ λ_ℓ (Δ−ε) Z_ℓ` with
//! `⟨φ, Z_ℓ⟩ = 0`, and certify the pointwise conclusions of the theory
//! (multiplier size `|λ_ℓ| ≲ ε μ_ℓ²`, weighted bound `|φ| ≲ Ψ_ε`, annulus
//! ratios `a_ℓ`) as sweep diagnostics.
//!
//! The orthogonality constraints use the coercive `H¹₀` form
//! `∫ ∇u·∇v = ∫ u Δv`, evaluated against the analytic `ΔZ_ℓ`; nothing in
//! the discretization differentiates `φ` numerically.

use crate::error::{Error, Result};
use crate::numerics::fd::laplacian_stencil;
use crate::numerics::grid::{RadialField, RadialGrid};
use crate::numerics::potential::newtonian_potential;
use crate::numerics::quad::{radial_integral_to, QuadOpts};
use crate::numerics::solve::{bordered_matrix, EquilibratedLu};
use crate::profiles::{
    annuli, crit_exponent, lap_v0, pu_value, tower_value, u0, v0, weight_psi, z_laplacian,
    z_value, TowerConfig,
};
use nalgebra::{DMatrix, DVector};
use std::sync::Arc;

/// Discrete linearized operator on the interior nodes (the boundary node
/// `r = 1` carries the Dirichlet condition and is eliminated).
pub struct LinearizedOperator {
    pub grid: Arc<RadialGrid>,
    pub matrix: DMatrix<f64>,
    pub eps: f64,
    /// `(2*−1)|W|^{2*−2}` per interior node.
    pub potential: Vec<f64>,
}

impl LinearizedOperator {
    /// Apply to a field on the full grid (boundary value ignored as 0).
    pub fn apply(&self, field: &RadialField) -> Vec<f64> {
        let m = self.matrix.nrows();
        let v = DVector::from_fn(m, |i, _| field.values[i]);
        let out = &self.matrix * v;
        out.iter().copied().collect()
    }
}

/// Assemble `φ ↦ Δφ − εφ − (2*−1)|W|^{2*−2} φ` on the graded mesh.
pub fn assemble_linearized(cfg: &TowerConfig, grid: &Arc<RadialGrid>) -> Result<LinearizedOperator> {
    if cfg.count > 0 && !grid.resolves_scale(cfg.min_scale()) {
        return Err(Error::GridTooCoarse(format!(
            "linearized operator needs >= 8 nodes below mu_k = {:.3e}",
            cfg.min_scale()
        )));
    }
    let nodes = &grid.nodes;
    let m = nodes.len() - 1; // interior unknowns
    let p = crit_exponent(cfg.dim);
    let mut a = DMatrix::zeros(m, m);
    let mut potential = Vec::with_capacity(m);
    for i in 0..m {
        let st = laplacian_stencil(nodes, grid.dim, i);
        if i > 0 {
            a[(i, i - 1)] = st[0];
        }
        a[(i, i)] = st[1];
        if i + 1 < m {
            a[(i, i + 1)] = st[2];
        } // else: couples to u(1) = 0
        let w = tower_value(cfg, nodes[i]);
        let pot = p * w.abs().powf(p - 1.0);
        potential.push(pot);
        a[(i, i)] -= cfg.eps + pot;
    }
    Ok(LinearizedOperator {
        grid: grid.clone(),
        matrix: a,
        eps: cfg.eps,
        potential,
    })
}

/// Output of one projected solve with the diagnostics the sweep criteria
/// consume.
#[derive(Clone, Debug)]
pub struct LinearSolveResult {
    pub phi: RadialField,
    /// One multiplier per bubble (the radial problem has only the dilation
    /// direction `(ℓ, 0)`).
    pub lambda: Vec<f64>,
    /// `‖φ/Ψ_ε‖_∞` over the mesh.
    pub weighted_norm: f64,
    /// `a_ℓ = sup_{C_ℓ} |φ| / W_ℓ` over the matching annuli.
    pub annulus_ratios: Vec<f64>,
    /// `|λ_ℓ| / (ε μ_ℓ²)`.
    pub multiplier_ratios: Vec<f64>,
    /// Cosine of the angle between φ and each constraint row (orthogonality
    /// residual, scale-free).
    pub orthogonality: Vec<f64>,
}

/// Projected bordered system, factored once and reused across right-hand
/// sides (the Picard map solves against the same operator every step).
pub struct ProjectedSolver {
    cfg: TowerConfig,
    grid: Arc<RadialGrid>,
    lu: EquilibratedLu,
    rows: DMatrix<f64>,
    m: usize,
}

impl ProjectedSolver {
    pub fn new(cfg: &TowerConfig, grid: &Arc<RadialGrid>) -> Result<ProjectedSolver> {
        let op = assemble_linearized(cfg, grid)?;
        let m = op.matrix.nrows();
        let k = cfg.count;
        let nodes = &grid.nodes;
        let weights = grid.quad_weights();
        let mus = cfg.mus();
        // coupling columns −(Δ−ε)Z_ℓ and constraint rows ⟨·, Z_ℓ⟩
        let mut cols = DMatrix::zeros(m, k);
        let mut rows = DMatrix::zeros(k, m);
        for l in 0..k {
            for i in 0..m {
                let lap_z = z_laplacian(mus[l], cfg.dim, nodes[i]);
                cols[(i, l)] = -(lap_z - cfg.eps * z_value(mus[l], cfg.dim, nodes[i]));
                rows[(l, i)] = weights[i] * lap_z;
            }
        }
        let full = bordered_matrix(&op.matrix, &cols, &rows);
        let lu = EquilibratedLu::new(full);
        Ok(ProjectedSolver {
            cfg: cfg.clone(),
            grid: grid.clone(),
            lu,
            rows,
            m,
        })
    }

    pub fn solve(&self, k_rhs: &RadialField) -> Result<LinearSolveResult> {
        let k = self.cfg.count;
        let mut big_rhs = DVector::zeros(self.m + k);
        for i in 0..self.m {
            big_rhs[i] = k_rhs.values[i];
        }
        let sol = self.lu.solve(&big_rhs).map_err(|e| match e {
            Error::SingularMatrix(msg) => Error::SingularSystem(format!(
                "projected system singular (check the tower scales): {msg}"
            )),
            other => other,
        })?;
        let mut values: Vec<f64> = (0..self.m).map(|i| sol[i]).collect();
        values.push(0.0); // Dirichlet node
        let phi = RadialField::new(self.grid.clone(), values);
        let lambda: Vec<f64> = (0..k).map(|l| sol[self.m + l]).collect();
        Ok(finish_diagnostics(
            &self.cfg, &self.grid, phi, lambda, &self.rows,
        ))
    }
}

/// Solve the bordered system for a given right-hand side on the grid.
pub fn solve_projected(
    cfg: &TowerConfig,
    grid: &Arc<RadialGrid>,
    k_rhs: &RadialField,
) -> Result<LinearSolveResult> {
    ProjectedSolver::new(cfg, grid)?.solve(k_rhs)
}

fn finish_diagnostics(
    cfg: &TowerConfig,
    grid: &Arc<RadialGrid>,
    phi: RadialField,
    lambda: Vec<f64>,
    rows: &DMatrix<f64>,
) -> LinearSolveResult {
    let k = cfg.count;
    let nodes = &grid.nodes;
    let mus = cfg.mus();
    let weighted_norm = if k == 0 {
        phi.sup_norm()
    } else {
        nodes
            .iter()
            .zip(&phi.values)
            .map(|(&r, &v)| v.abs() / weight_psi(cfg, r))
            .fold(0.0f64, f64::max)
    };
    let mut annulus_ratios = vec![0.0f64; k];
    for l in 0..k {
        let lo = if l + 1 < k {
            0.25 * (mus[l + 1] * mus[l]).sqrt()
        } else {
            0.0
        };
        let hi = if l == 0 {
            1.0
        } else {
            (4.0 * (mus[l] * mus[l - 1]).sqrt()).min(1.0)
        };
        for (i, &r) in nodes.iter().enumerate() {
            if r >= lo && r <= hi && r < 1.0 {
                let w = pu_value(mus[l], cfg.dim, r);
                if w > 0.0 {
                    annulus_ratios[l] = annulus_ratios[l].max(phi.values[i].abs() / w);
                }
            }
        }
    }
    let multiplier_ratios: Vec<f64> = lambda
        .iter()
        .enumerate()
        .map(|(l, lam)| lam.abs() / (cfg.eps * mus[l] * mus[l]))
        .collect();
    let m = rows.ncols();
    let phi_int = DVector::from_fn(m, |i, _| phi.values[i]);
    let mut orthogonality = Vec::with_capacity(k);
    for l in 0..k {
        let row = rows.row(l).transpose();
        let denom = row.norm() * phi_int.norm();
        orthogonality.push(if denom == 0.0 {
            0.0
        } else {
            (row.dot(&phi_int) / denom).abs()
        });
    }
    LinearSolveResult {
        phi,
        lambda,
        weighted_norm,
        annulus_ratios,
        multiplier_ratios,
        orthogonality,
    }
}

/// Admissibility of a right-hand side against the pointwise envelope
/// `Σ_i μ_i^{(n+2)/2} θ_i^{−4}` plus the shell-wise interaction terms
/// `W_ℓ^{2*−2}(W_{ℓ+1} + W_{ℓ−1})`.
#[derive(Clone, Debug)]
pub struct Admissibility {
    pub admissible: bool,
    pub worst_ratio: f64,
    /// Radius where the worst ratio is attained.
    pub location: f64,
}

pub fn check_rhs_admissible(
    cfg: &TowerConfig,
    k_rhs: &RadialField,
    threshold: f64,
) -> Result<Admissibility> {
    let ann = annuli(cfg)?;
    let nf = cfg.dim as f64;
    let p = crit_exponent(cfg.dim);
    let mus = cfg.mus();
    let mut worst = (0.0f64, 0.0f64);
    for (i, &r) in k_rhs.grid.nodes.iter().enumerate() {
        let mut bound = 0.0;
        for (l, &mu) in mus.iter().enumerate() {
            bound += ((nf + 2.0) / 2.0 * mu.ln() - 4.0 * cfg.theta(l, r).ln()).exp();
        }
        let shell = ann.shell_of(r);
        let w_shell = pu_value(mus[shell], cfg.dim, r).abs();
        let mut neighbors = 0.0;
        if shell + 1 < cfg.count {
            neighbors += pu_value(mus[shell + 1], cfg.dim, r).abs();
        }
        if shell > 0 {
            neighbors += pu_value(mus[shell - 1], cfg.dim, r).abs();
        }
        bound += w_shell.powf(p - 1.0) * neighbors;
        let ratio = k_rhs.values[i].abs() / bound;
        if ratio > worst.0 {
            worst = (ratio, r);
        }
    }
    Ok(Admissibility {
        admissible: worst.0 <= threshold,
        worst_ratio: worst.0,
        location: worst.1,
    })
}

/// Smooth radial test function with its analytic Laplacian, for the
/// representation-formula check.
pub struct RadialTestFunction {
    pub value: Box<dyn Fn(f64) -> f64>,
    pub laplacian: Box<dyn Fn(f64) -> f64>,
    /// Effective support radius.
    pub support: f64,
}

impl RadialTestFunction {
    /// `V_0` with a smooth cosine-taper cutoff between `r0` and `2 r0`.
    pub fn truncated_v0(n: u32, r0: f64) -> RadialTestFunction {
        let cutoff = move |r: f64| -> (f64, f64, f64) {
            // (χ, χ', χ'')
            if r <= r0 {
                (1.0, 0.0, 0.0)
            } else if r >= 2.0 * r0 {
                (0.0, 0.0, 0.0)
            } else {
                let t = (r - r0) / r0 * std::f64::consts::PI;
                (
                    0.5 * (1.0 + t.cos()),
                    -0.5 * t.sin() * std::f64::consts::PI / r0,
                    -0.5 * t.cos() * (std::f64::consts::PI / r0).powi(2),
                )
            }
        };
        RadialTestFunction {
            value: Box::new(move |r| crate::profiles::v0(n, r) * cutoff(r).0),
            laplacian: Box::new(move |r| {
                let (c, dc, ddc) = cutoff(r);
                let v = crate::profiles::v0(n, r);
                let dv = crate::profiles::v0_d1(n, r);
                // Δ(χ v) = χ Δv − 2 χ' v' − v (χ'' + (n−1) χ'/r)
                let lap_v = lap_v0(n, r);
                let extra = if r == 0.0 {
                    0.0
                } else {
                    ddc + (n as f64 - 1.0) * dc / r
                };
                c * lap_v - 2.0 * dc * dv - v * extra
            }),
            support: 2.0 * r0,
        }
    }

    /// Gaussian ring bump centered at `r0` with width `sigma`.
    pub fn gaussian_bump(n: u32, r0: f64, sigma: f64) -> RadialTestFunction {
        let g = move |r: f64| (-((r - r0) / sigma).powi(2) / 2.0).exp();
        RadialTestFunction {
            value: Box::new(g),
            laplacian: Box::new(move |r| {
                let u = (r - r0) / sigma;
                let d1 = -u / sigma * g(r);
                let d2 = (u * u - 1.0) / (sigma * sigma) * g(r);
                if r == 0.0 {
                    -(n as f64) * d2
                } else {
                    -d2 - (n as f64 - 1.0) * d1 / r
                }
            }),
            support: r0 + 12.0 * sigma,
        }
    }
}

/// Both sides of the representation bound
/// `|φ − Π(φ)| ≲ ∫ |x−y|^{2−n} |Δφ − (2*−1)U_0^{2*−2}φ|(y) dy`
/// sampled on `sample_radii`, with their maximal ratio.
#[derive(Clone, Debug)]
pub struct RepresentationReport {
    pub lhs: Vec<f64>,
    pub rhs: Vec<f64>,
    pub max_ratio: f64,
}

pub fn representation_check(
    phi: &RadialTestFunction,
    n: u32,
    sample_radii: &[f64],
) -> Result<RepresentationReport> {
    let p = crit_exponent(n);
    let support = phi.support;
    let opts = QuadOpts::default();
    // L²(U^{2*−2}) projection onto V_0 (the only radial kernel direction)
    let num = radial_integral_to(
        |r| (phi.value)(r) * v0(n, r) * u0(n, r).powf(p - 1.0),
        n,
        support,
        &[1.0, support / 4.0],
        opts,
    )?;
    let den = radial_integral_to(
        |r| v0(n, r).powi(2) * u0(n, r).powf(p - 1.0),
        n,
        support,
        &[1.0, support / 4.0],
        opts,
    )?;
    let c = num / den;
    let defect = |r: f64| ((phi.laplacian)(r) - p * u0(n, r).powf(p - 1.0) * (phi.value)(r)).abs();
    let rhs = newtonian_potential(defect, n, support, &[1.0], sample_radii, opts)?;
    let lhs: Vec<f64> = sample_radii
        .iter()
        .map(|&r| ((phi.value)(r) - c * v0(n, r)).abs())
        .collect();
    let rhs_sup = rhs.iter().fold(0.0f64, |m, v| m.max(*v));
    let mut max_ratio = 0.0f64;
    for (l, r) in lhs.iter().zip(&rhs) {
        if *r > 1e-12 * rhs_sup {
            max_ratio = max_ratio.max(l / r);
        }
    }
    Ok(RepresentationReport { lhs, rhs, max_ratio })
}
