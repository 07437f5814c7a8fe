//! Green and Robin functions of the Dirichlet Laplacian `Δ = −Σ∂_i²`.
//!
//! On the unit ball everything is analytic through the image charge:
//! `G(x,y) = κ_n (|x−y|^{2−n} − (|x| |x/|x|² − y|)^{2−n})` with
//! `κ_n = 1/((n−2) ω_{n−1})`, and the Robin diagonal is
//! `H(ξ,ξ) = κ_n (1−|ξ|²)^{2−n}`.
//!
//! Star-shaped perturbations use fundamental-solution collocation: sources
//! on a dilated copy of the boundary (factor 1.2), collocation points on
//! the boundary itself, one SVD per domain reused across queries.

use crate::error::{Error, Result};
use crate::numerics::solve::EquilibratedLu;
use crate::numerics::special::surface_area;
use nalgebra::{DMatrix, DVector, SymmetricEigen};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use std::path::Path;

// In dimension 7 a source shell close to the boundary (the textbook 1.2R)
// paints footprints of angular width ~0.2 rad, far narrower than any
// affordable source spacing on S^6, and the collocation system cannot
// represent even constants. A far shell overlaps footprints; 5R brings the
// center value of the ball Robin function below 1e-6 absolute error with
// ~1200 sources.
const SOURCE_DILATION: f64 = 5.0;
const CONDITION_LIMIT: f64 = 1e14;
const NONDEGENERACY_GAP: f64 = 1e-6;

/// Domain of the problem: the unit ball, or a star-shaped boundary given by
/// a tabulated radius per direction.
#[derive(Clone, Debug)]
pub enum DomainSpec {
    UnitBall { dim: u32 },
    StarShaped { dim: u32, table: Vec<(Vec<f64>, f64)> },
}

impl DomainSpec {
    pub fn dim(&self) -> u32 {
        match self {
            DomainSpec::UnitBall { dim } => *dim,
            DomainSpec::StarShaped { dim, .. } => *dim,
        }
    }

    /// Tabulate an analytic radius function on a seeded quasi-uniform
    /// direction set.
    pub fn star_from_fn<F: Fn(&[f64]) -> f64>(
        dim: u32,
        count: usize,
        seed: u64,
        rho: F,
    ) -> Result<DomainSpec> {
        let dirs = unit_sphere_points(dim, count, seed);
        let mut table = Vec::with_capacity(count);
        for u in dirs {
            let r = rho(&u);
            if !(r > 0.0) {
                return Err(Error::InvalidConfig(
                    "star-shaped radius must be strictly positive".into(),
                ));
            }
            table.push((u, r));
        }
        Ok(DomainSpec::StarShaped { dim, table })
    }

    /// Read `direction components + radius` per whitespace-separated line.
    pub fn load_star(dim: u32, path: &Path) -> Result<DomainSpec> {
        let text = std::fs::read_to_string(path)?;
        let mut table = Vec::new();
        for (lineno, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let vals: Vec<f64> = line
                .split_whitespace()
                .map(|t| t.parse::<f64>())
                .collect::<std::result::Result<_, _>>()
                .map_err(|e| {
                    Error::ConfigParse(format!("boundary file line {}: {e}", lineno + 1))
                })?;
            if vals.len() != dim as usize + 1 {
                return Err(Error::ConfigParse(format!(
                    "boundary file line {}: expected {} direction components + radius",
                    lineno + 1,
                    dim
                )));
            }
            let mut u = vals[..dim as usize].to_vec();
            let norm: f64 = u.iter().map(|v| v * v).sum::<f64>().sqrt();
            if norm == 0.0 {
                return Err(Error::ConfigParse(format!(
                    "boundary file line {}: zero direction",
                    lineno + 1
                )));
            }
            u.iter_mut().for_each(|v| *v /= norm);
            let r = vals[dim as usize];
            if !(r > 0.0) {
                return Err(Error::ConfigParse(format!(
                    "boundary file line {}: radius must be positive",
                    lineno + 1
                )));
            }
            table.push((u, r));
        }
        if table.len() < 64 {
            return Err(Error::InvalidConfig(
                "boundary table too small: need at least 64 directions".into(),
            ));
        }
        Ok(DomainSpec::StarShaped { dim, table })
    }
}

/// Seeded quasi-uniform points on `S^{n−1}` (normalized Gaussians).
pub fn unit_sphere_points(dim: u32, count: usize, seed: u64) -> Vec<Vec<f64>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out = Vec::with_capacity(count);
    while out.len() < count {
        let mut v: Vec<f64> = (0..dim)
            .map(|_| {
                // Box-Muller
                let u1: f64 = rng.gen_range(1e-12..1.0);
                let u2: f64 = rng.gen_range(0.0..std::f64::consts::TAU);
                (-2.0 * u1.ln()).sqrt() * u2.cos()
            })
            .collect();
        let norm: f64 = v.iter().map(|x| x * x).sum::<f64>().sqrt();
        if norm < 1e-6 {
            continue;
        }
        v.iter_mut().for_each(|x| *x /= norm);
        out.push(v);
    }
    out
}

fn kappa(n: u32) -> f64 {
    1.0 / ((n as f64 - 2.0) * surface_area(n))
}

fn dist(x: &[f64], y: &[f64]) -> f64 {
    x.iter()
        .zip(y)
        .map(|(a, b)| (a - b) * (a - b))
        .sum::<f64>()
        .sqrt()
}

/// Fundamental solution `E(d) = κ_n |d|^{2−n}`.
fn fsol(n: u32, d: f64) -> f64 {
    kappa(n) * d.powf(2.0 - n as f64)
}

fn fsol_grad(n: u32, d: &[f64]) -> Vec<f64> {
    // ∇E = −d |d|^{−n} / ω
    let r2: f64 = d.iter().map(|v| v * v).sum();
    let rn = r2.powf(-(n as f64) / 2.0);
    let c = -rn / surface_area(n);
    d.iter().map(|v| c * v).collect()
}

fn fsol_hess(n: u32, d: &[f64]) -> DMatrix<f64> {
    let nf = n as f64;
    let dim = d.len();
    let r2: f64 = d.iter().map(|v| v * v).sum();
    let rn = r2.powf(-nf / 2.0);
    let c = -1.0 / surface_area(n);
    DMatrix::from_fn(dim, dim, |j, m| {
        let mut v = if j == m { rn } else { 0.0 };
        v -= nf * d[j] * d[m] * rn / r2;
        c * v
    })
}

/// Dirichlet Green function of the unit ball via the image charge; for
/// `x = 0` the image term degenerates to the constant `κ_n`.
pub fn ball_green(x: &[f64], y: &[f64], n: u32) -> Result<f64> {
    let rx: f64 = x.iter().map(|v| v * v).sum::<f64>().sqrt();
    let ry: f64 = y.iter().map(|v| v * v).sum::<f64>().sqrt();
    if rx >= 1.0 || ry >= 1.0 {
        return Err(Error::InvalidConfig(
            "ball_green needs both points strictly inside the unit ball".into(),
        ));
    }
    let d = dist(x, y);
    if d == 0.0 {
        return Err(Error::InvalidConfig("ball_green requires x != y".into()));
    }
    // |x| |x* − y| is symmetric in (x, y); expand to avoid 0/0 at x = 0:
    // (|x||x*−y|)² = 1 − 2 x·y + |x|²|y|²
    let dot: f64 = x.iter().zip(y).map(|(a, b)| a * b).sum();
    let image = (1.0 - 2.0 * dot + rx * rx * ry * ry).sqrt();
    Ok(kappa(n) * (d.powf(2.0 - n as f64) - image.powf(2.0 - n as f64)))
}

/// Robin diagonal data at a point: value, gradient and Hessian of
/// `ξ ↦ H(ξ,ξ)` plus accuracy/conditioning estimates.
#[derive(Clone, Debug)]
pub struct RobinResult {
    pub value: f64,
    pub gradient: Vec<f64>,
    pub hessian: DMatrix<f64>,
    /// Estimated absolute accuracy (held-out boundary residual for
    /// collocation, machine epsilon for the analytic path).
    pub accuracy: f64,
    /// Condition estimate of the collocation system (1 for analytic).
    pub condition: f64,
}

/// Critical point of the Robin diagonal.
#[derive(Clone, Debug)]
pub struct RobinCriticalPoint {
    pub point: Vec<f64>,
    pub hessian: DMatrix<f64>,
    pub nondegenerate: bool,
    pub iterations: usize,
}

/// Collocation state factored once per domain: one source per collocation
/// point (a square interpolation system), solved through an equilibrated
/// LU; the held-out sixth of the boundary table reports the honest
/// accuracy.
pub struct GreensSolver {
    dim: u32,
    kind_ball: bool,
    sources: Vec<Vec<f64>>,
    collocation: Vec<Vec<f64>>,
    held_out: Vec<Vec<f64>>,
    lu: Option<EquilibratedLu>,
    pub condition: f64,
}

impl GreensSolver {
    pub fn new(dom: &DomainSpec) -> Result<GreensSolver> {
        match dom {
            DomainSpec::UnitBall { dim } => Ok(GreensSolver {
                dim: *dim,
                kind_ball: true,
                sources: vec![],
                collocation: vec![],
                held_out: vec![],
                lu: None,
                condition: 1.0,
            }),
            DomainSpec::StarShaped { dim, table } => {
                let n = *dim;
                let mut collocation: Vec<Vec<f64>> = Vec::new();
                let mut held_out: Vec<Vec<f64>> = Vec::new();
                let mut sources: Vec<Vec<f64>> = Vec::new();
                for (i, (u, rho)) in table.iter().enumerate() {
                    let x: Vec<f64> = u.iter().map(|v| v * rho).collect();
                    if i % 6 == 5 {
                        held_out.push(x);
                    } else {
                        sources.push(u.iter().map(|v| v * rho * SOURCE_DILATION).collect());
                        collocation.push(x);
                    }
                }
                let m = collocation.len();
                let a = DMatrix::from_fn(m, m, |i, j| {
                    fsol(n, dist(&collocation[i], &sources[j]))
                });
                let norm_a = a.amax() * (m as f64).sqrt();
                let lu = EquilibratedLu::new(a.clone());
                // inverse power iteration on AᵀA for a σ_min estimate
                let lut = EquilibratedLu::new(a.transpose());
                let mut v = DVector::from_fn(m, |i, _| ((i * 37 + 11) % 101) as f64 / 101.0 - 0.5);
                let mut inv_norm = 0.0;
                for _ in 0..6 {
                    v /= v.norm();
                    let w = lu
                        .solve(&v)
                        .and_then(|w| lut.solve(&w))
                        .map_err(|_| Error::IllConditioned {
                            cond: f64::INFINITY,
                            limit: CONDITION_LIMIT,
                        })?;
                    inv_norm = w.norm().sqrt();
                    v = w;
                }
                let condition = norm_a * inv_norm;
                if condition > CONDITION_LIMIT {
                    return Err(Error::IllConditioned {
                        cond: condition,
                        limit: CONDITION_LIMIT,
                    });
                }
                Ok(GreensSolver {
                    dim: n,
                    kind_ball: false,
                    sources,
                    collocation,
                    held_out,
                    lu: Some(lu),
                    condition,
                })
            }
        }
    }

    fn solve_coeffs(&self, b: &DVector<f64>) -> DVector<f64> {
        let lu = self.lu.as_ref().expect("collocation path only");
        lu.solve(b).expect("collocation solve")
    }

    /// Regular part `H(x, y)` of the Green function by collocation.
    pub fn regular_part(&self, x: &[f64], y: &[f64]) -> f64 {
        if self.kind_ball {
            let dot: f64 = x.iter().zip(y).map(|(a, b)| a * b).sum();
            let rx2: f64 = x.iter().map(|v| v * v).sum();
            let ry2: f64 = y.iter().map(|v| v * v).sum();
            let image = (1.0 - 2.0 * dot + rx2 * ry2).sqrt();
            return kappa(self.dim) * image.powf(2.0 - self.dim as f64);
        }
        let b = DVector::from_fn(self.collocation.len(), |i, _| {
            fsol(self.dim, dist(&self.collocation[i], y))
        });
        let c = self.solve_coeffs(&b);
        (0..self.sources.len())
            .map(|j| c[j] * fsol(self.dim, dist(x, &self.sources[j])))
            .sum()
    }

    /// Green function `G(x,y) = E(x−y) − H(x,y)`.
    pub fn green(&self, x: &[f64], y: &[f64]) -> f64 {
        fsol(self.dim, dist(x, y)) - self.regular_part(x, y)
    }

    /// Held-out boundary residual for the singularity at `y`: the reported
    /// accuracy of this domain's collocation.
    pub fn boundary_residual(&self, y: &[f64]) -> f64 {
        if self.kind_ball {
            return f64::EPSILON;
        }
        self.held_out
            .iter()
            .map(|x| self.green(x, y).abs())
            .fold(0.0, f64::max)
    }

    /// `H(ξ,ξ)` with gradient and Hessian of the diagonal map.
    pub fn robin_diag(&self, xi: &[f64]) -> Result<RobinResult> {
        let n = self.dim;
        let nf = n as f64;
        let d = n as usize;
        if self.kind_ball {
            let r2: f64 = xi.iter().map(|v| v * v).sum();
            if r2 >= 0.9025 {
                return Err(Error::InvalidConfig(
                    "robin_diag wants a margin of at least 0.05 from the boundary".into(),
                ));
            }
            let u = 1.0 - r2;
            let k = kappa(n);
            let value = k * u.powf(2.0 - nf);
            let gradient: Vec<f64> = xi
                .iter()
                .map(|v| 2.0 * k * (nf - 2.0) * v * u.powf(1.0 - nf))
                .collect();
            let hessian = DMatrix::from_fn(d, d, |j, m| {
                let mut v = if j == m { u.powf(1.0 - nf) } else { 0.0 };
                v += 2.0 * (nf - 1.0) * xi[j] * xi[m] * u.powf(-nf);
                2.0 * k * (nf - 2.0) * v
            });
            return Ok(RobinResult {
                value,
                gradient,
                hessian,
                accuracy: f64::EPSILON,
                condition: 1.0,
            });
        }

        // collocation path: H(ξ,ξ) = c(ξ)·φ(ξ), all ξ-derivatives analytic
        let rows = self.collocation.len();
        let b = DVector::from_fn(rows, |i, _| fsol(n, dist(&self.collocation[i], xi)));
        let mut db = vec![DVector::zeros(rows); d];
        let mut ddb = vec![DVector::zeros(rows); d * d];
        for (i, x) in self.collocation.iter().enumerate() {
            let diff: Vec<f64> = x.iter().zip(xi).map(|(a, b)| a - b).collect();
            let g = fsol_grad(n, &diff);
            let h = fsol_hess(n, &diff);
            for m in 0..d {
                db[m][i] = -g[m]; // ∂/∂ξ_m E(x−ξ)
                for j in 0..d {
                    ddb[j * d + m][i] = h[(j, m)];
                }
            }
        }
        let c = self.solve_coeffs(&b);
        let dc: Vec<DVector<f64>> = db.iter().map(|v| self.solve_coeffs(v)).collect();
        let phi = DVector::from_fn(self.sources.len(), |j, _| {
            fsol(n, dist(xi, &self.sources[j]))
        });
        let mut dphi = vec![DVector::zeros(self.sources.len()); d];
        let mut ddphi = vec![DVector::zeros(self.sources.len()); d * d];
        for (j, s) in self.sources.iter().enumerate() {
            let diff: Vec<f64> = xi.iter().zip(s).map(|(a, b)| a - b).collect();
            let g = fsol_grad(n, &diff);
            let h = fsol_hess(n, &diff);
            for m in 0..d {
                dphi[m][j] = g[m];
                for l in 0..d {
                    ddphi[l * d + m][j] = h[(l, m)];
                }
            }
        }
        let value = c.dot(&phi);
        let mut gradient = vec![0.0; d];
        for m in 0..d {
            gradient[m] = dc[m].dot(&phi) + c.dot(&dphi[m]);
        }
        let mut hessian = DMatrix::zeros(d, d);
        for j in 0..d {
            for m in 0..d {
                let ddc = self.solve_coeffs(&ddb[j * d + m]);
                hessian[(j, m)] = ddc.dot(&phi)
                    + dc[j].dot(&dphi[m])
                    + dc[m].dot(&dphi[j])
                    + c.dot(&ddphi[j * d + m]);
            }
        }
        // symmetrize roundoff
        let hessian = (hessian.clone() + hessian.transpose()) * 0.5;
        Ok(RobinResult {
            value,
            gradient,
            hessian,
            accuracy: self.boundary_residual(xi),
            condition: self.condition,
        })
    }

    /// Newton on `∇[H(ξ,ξ)]` to tolerance 1e−10.
    pub fn find_robin_critical_point(&self, seed: &[f64]) -> Result<RobinCriticalPoint> {
        let d = self.dim as usize;
        let mut xi = seed.to_vec();
        for it in 0..60 {
            let r = self.robin_diag(&xi)?;
            let gnorm: f64 = r.gradient.iter().map(|v| v * v).sum::<f64>().sqrt();
            if gnorm <= 1e-10 {
                let eig = SymmetricEigen::new(r.hessian.clone());
                let emax = eig.eigenvalues.iter().fold(0.0f64, |m, v| m.max(v.abs()));
                let emin = eig
                    .eigenvalues
                    .iter()
                    .fold(f64::INFINITY, |m, v| m.min(v.abs()));
                return Ok(RobinCriticalPoint {
                    point: xi,
                    hessian: r.hessian,
                    nondegenerate: emin >= NONDEGENERACY_GAP * emax,
                    iterations: it,
                });
            }
            let g = DVector::from_column_slice(&r.gradient);
            let step = crate::numerics::solve::solve_dense(&r.hessian, &g)?;
            for m in 0..d {
                xi[m] -= step[m];
            }
            let rad: f64 = xi.iter().map(|v| v * v).sum::<f64>().sqrt();
            if rad > 0.9 {
                return Err(Error::LeftAdmissibleRegion(format!(
                    "robin newton iterate reached |ξ| = {rad:.3}"
                )));
            }
        }
        Err(Error::NewtonDivergence {
            iterations: 60,
            final_residual: f64::NAN,
            history: vec![],
        })
    }
}

/// One-shot Robin diagonal (constructs the solver; prefer [`GreensSolver`]
/// for repeated queries on a star-shaped domain).
pub fn robin_diag(dom: &DomainSpec, xi: &[f64]) -> Result<RobinResult> {
    GreensSolver::new(dom)?.robin_diag(xi)
}

pub fn find_robin_critical_point(dom: &DomainSpec, seed: &[f64]) -> Result<RobinCriticalPoint> {
    GreensSolver::new(dom)?.find_robin_critical_point(seed)
}
