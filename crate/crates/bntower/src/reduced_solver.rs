//! The finite-dimensional reduced system.
//!
//! Concentration exponents are kept as exact rationals,
//! `γ_ℓ = (n−2)/(2(n−4)) ((n−2)/(n−6))^{ℓ−1} − 1/2`, which makes the
//! balance `ε^{1+2γ_ℓ} = ε^{(n−2)/2 (γ_ℓ−γ_{ℓ−1})}` an identity of
//! integers. The system `F = 0` stacks, per bubble, a dilation row and `n`
//! translation rows; its explicit zero `t_{ℓ,0}` is known in closed form
//! on domains with a Robin critical point.

use crate::error::{Error, Result};
use crate::greens::{GreensSolver, RobinResult};
use crate::numerics::solve::solve_dense;
use crate::profiles::{u0, u0_grad, u0_hess};
use crate::reduction::ReducedCoefficients;
use nalgebra::{DMatrix, DVector};
use num_rational::Ratio;

/// Exact concentration exponent `γ_ℓ` (1-based `ell`). Singular at n = 6.
pub fn gamma(n: u32, ell: usize) -> Result<Ratio<i64>> {
    if n <= 6 {
        return Err(Error::InvalidConfig(format!(
            "gamma schedule needs n >= 7 (singular at n = 6), got {n}"
        )));
    }
    if ell == 0 {
        return Err(Error::IndexOutOfRange("gamma wants ell >= 1".into()));
    }
    let nn = n as i64;
    let base = Ratio::new(nn - 2, 2 * (nn - 4));
    let q = Ratio::new(nn - 2, nn - 6);
    let mut pow = Ratio::from_integer(1);
    for _ in 1..ell {
        pow *= q;
    }
    Ok(base * pow - Ratio::new(1, 2))
}

/// The full exponent ladder for one dimension.
#[derive(Clone, Debug)]
pub struct GammaSchedule {
    pub dim: u32,
    pub exponents: Vec<Ratio<i64>>,
}

impl GammaSchedule {
    pub fn new(dim: u32, k: usize) -> Result<GammaSchedule> {
        let exponents = (1..=k).map(|l| gamma(dim, l)).collect::<Result<_>>()?;
        Ok(GammaSchedule { dim, exponents })
    }

    /// `ε^{1+2γ_ℓ} = ε^{(n−2)/2 (γ_ℓ − γ_{ℓ−1})}` as exact rationals,
    /// `ℓ ≥ 2` (1-based).
    pub fn identity_holds(&self, ell: usize) -> bool {
        if ell < 2 || ell > self.exponents.len() {
            return false;
        }
        let g = self.exponents[ell - 1];
        let gp = self.exponents[ell - 2];
        let lhs = Ratio::from_integer(1) + Ratio::from_integer(2) * g;
        let rhs = Ratio::new(self.dim as i64 - 2, 2) * (g - gp);
        lhs == rhs
    }
}

/// Closed-form zeros: `t_{1,0} = (2D1/((n−2)D2 H₀₀))^{1/(n−4)}` and the
/// recursion `t_{ℓ,0} = (4D1/((n−2)D3) t_{ℓ−1,0}^{(n−2)/2})^{2/(n−6)}`.
pub fn explicit_t0(n: u32, coeffs: &ReducedCoefficients, h00: f64, k: usize) -> Vec<f64> {
    let nf = n as f64;
    let mut t = Vec::with_capacity(k);
    if k == 0 {
        return t;
    }
    let t1 = (2.0 * coeffs.d1 / ((nf - 2.0) * coeffs.d2 * h00)).powf(1.0 / (nf - 4.0));
    t.push(t1);
    for _ in 2..=k {
        let prev: f64 = *t.last().unwrap();
        let base = 4.0 * coeffs.d1 / ((nf - 2.0) * coeffs.d3) * prev.powf((nf - 2.0) / 2.0);
        t.push(base.powf(2.0 / (nf - 6.0)));
    }
    t
}

/// A point of the reduced configuration space.
#[derive(Clone, Debug)]
pub struct ReducedPoint {
    pub t: Vec<f64>,
    pub xi: Vec<f64>,
    /// k−1 offsets `z_2 … z_k` in ℝⁿ.
    pub z: Vec<Vec<f64>>,
}

impl ReducedPoint {
    pub fn dim_total(&self, n: u32) -> usize {
        self.t.len() * (1 + n as usize)
    }

}

/// Admissible box for the Newton iteration, centered on the natural zero
/// (the theory's `A` is unquantified; a fixed absolute box would exclude
/// the actual zeros, whose components are far from 1 on the unit ball).
#[derive(Clone, Debug)]
pub struct SkBounds {
    pub t_lo: Vec<f64>,
    pub t_hi: Vec<f64>,
    pub z_max: f64,
    pub xi_max: f64,
}

impl SkBounds {
    /// `t_ℓ ∈ [t_{ℓ,0}/A, A t_{ℓ,0}]`, `|z| ≤ 1`, `|ξ| ≤ 0.9`.
    pub fn centered_on(t0: &[f64], factor: f64) -> SkBounds {
        SkBounds {
            t_lo: t0.iter().map(|t| t / factor).collect(),
            t_hi: t0.iter().map(|t| t * factor).collect(),
            z_max: 1.0,
            xi_max: 0.9,
        }
    }

    pub fn contains(&self, p: &ReducedPoint) -> bool {
        for (l, t) in p.t.iter().enumerate() {
            if !(*t >= self.t_lo[l] && *t <= self.t_hi[l]) {
                return false;
            }
        }
        let xin: f64 = p.xi.iter().map(|v| v * v).sum::<f64>().sqrt();
        if xin > self.xi_max {
            return false;
        }
        for z in &p.z {
            let zn: f64 = z.iter().map(|v| v * v).sum::<f64>().sqrt();
            if zn > self.z_max {
                return false;
            }
        }
        true
    }
}

/// Residual of the reduced system, stacked as
/// `[row(1,0), row(1,j)_{j=1..n}, row(2,0), row(2,j), …]`, length `k(1+n)`.
pub fn reduced_f(
    n: u32,
    point: &ReducedPoint,
    coeffs: &ReducedCoefficients,
    robin: &RobinResult,
) -> DVector<f64> {
    let nf = n as f64;
    let d = n as usize;
    let k = point.t.len();
    let mut f = DVector::zeros(k * (1 + d));
    let mut at = 0;
    for l in 0..k {
        let t = point.t[l];
        if l == 0 {
            f[at] = -(4.0 * coeffs.d1 / (nf - 2.0)) * t * t
                + 2.0 * coeffs.d2 * t.powf(nf - 2.0) * robin.value;
            at += 1;
            for j in 0..d {
                f[at + j] = nf * coeffs.d2 * t.powf(nf - 1.0) * robin.gradient[j];
            }
            at += d;
        } else {
            let rho = t / point.t[l - 1];
            let z = &point.z[l - 1];
            f[at] = -(4.0 * coeffs.d1 / (nf - 2.0)) * t * t
                + coeffs.d3 * rho.powf((nf - 2.0) / 2.0) * u0(n, norm(z));
            at += 1;
            let grad = u0_grad(n, z);
            for j in 0..d {
                f[at + j] = nf * coeffs.d3 * rho.powf(nf / 2.0) * grad[j];
            }
            at += d;
        }
    }
    f
}

fn norm(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}

/// Natural magnitude of each residual row (the sum of its competing
/// terms). The rows live on wildly different scales — on the unit ball
/// `t_{2,0}/t_{1,0} ~ 2e−8` — so both convergence and the Newton
/// iteration itself must be judged row-relative.
pub fn reduced_f_scales(
    n: u32,
    point: &ReducedPoint,
    coeffs: &ReducedCoefficients,
    robin: &RobinResult,
) -> DVector<f64> {
    let nf = n as f64;
    let d = n as usize;
    let k = point.t.len();
    let mut s = DVector::zeros(k * (1 + d));
    let mut at = 0;
    for l in 0..k {
        let t = point.t[l];
        if l == 0 {
            let a = (4.0 * coeffs.d1 / (nf - 2.0)) * t * t;
            let b = 2.0 * coeffs.d2 * t.powf(nf - 2.0) * robin.value;
            s[at] = a.abs() + b.abs();
            at += 1;
            let g = nf * coeffs.d2 * t.powf(nf - 1.0);
            let hscale = robin.hessian.amax().max(robin.value);
            for j in 0..d {
                s[at + j] = g * hscale;
            }
            at += d;
        } else {
            let rho = t / point.t[l - 1];
            let a = (4.0 * coeffs.d1 / (nf - 2.0)) * t * t;
            let b = coeffs.d3 * rho.powf((nf - 2.0) / 2.0);
            s[at] = a.abs() + b.abs();
            at += 1;
            let g = nf * coeffs.d3 * rho.powf(nf / 2.0);
            for j in 0..d {
                s[at + j] = g;
            }
            at += d;
        }
    }
    s
}

/// Analytic Jacobian of [`reduced_f`] in the same variable ordering
/// `[t_1, ξ, t_2, z_2, …]`.
pub fn reduced_jacobian(
    n: u32,
    point: &ReducedPoint,
    coeffs: &ReducedCoefficients,
    robin: &RobinResult,
) -> DMatrix<f64> {
    let nf = n as f64;
    let d = n as usize;
    let k = point.t.len();
    let total = k * (1 + d);
    let mut jac = DMatrix::zeros(total, total);
    let col_t = |l: usize| l * (1 + d);
    let col_block = |l: usize| l * (1 + d) + 1;
    let mut row = 0;
    for l in 0..k {
        let t = point.t[l];
        if l == 0 {
            // row (1,0)
            jac[(row, col_t(0))] = -(8.0 * coeffs.d1 / (nf - 2.0)) * t
                + 2.0 * (nf - 2.0) * coeffs.d2 * t.powf(nf - 3.0) * robin.value;
            for m in 0..d {
                jac[(row, col_block(0) + m)] =
                    2.0 * coeffs.d2 * t.powf(nf - 2.0) * robin.gradient[m];
            }
            row += 1;
            // rows (1,j)
            for j in 0..d {
                jac[(row + j, col_t(0))] =
                    nf * (nf - 1.0) * coeffs.d2 * t.powf(nf - 2.0) * robin.gradient[j];
                for m in 0..d {
                    jac[(row + j, col_block(0) + m)] =
                        nf * coeffs.d2 * t.powf(nf - 1.0) * robin.hessian[(j, m)];
                }
            }
            row += d;
        } else {
            let tp = point.t[l - 1];
            let rho = t / tp;
            let z = &point.z[l - 1];
            let u = u0(n, norm(z));
            let grad = u0_grad(n, z);
            let hess = u0_hess(n, z);
            let p_half = (nf - 2.0) / 2.0;
            // row (ℓ,0)
            jac[(row, col_t(l))] = -(8.0 * coeffs.d1 / (nf - 2.0)) * t
                + coeffs.d3 * p_half * rho.powf(p_half - 1.0) / tp * u;
            jac[(row, col_t(l - 1))] = -coeffs.d3 * p_half * rho.powf(p_half) / tp * u;
            for m in 0..d {
                jac[(row, col_block(l) + m)] = coeffs.d3 * rho.powf(p_half) * grad[m];
            }
            row += 1;
            // rows (ℓ,j)
            let p_full = nf / 2.0;
            for j in 0..d {
                jac[(row + j, col_t(l))] =
                    nf * coeffs.d3 * p_full * rho.powf(p_full) / t * grad[j];
                jac[(row + j, col_t(l - 1))] =
                    -nf * coeffs.d3 * p_full * rho.powf(p_full) / tp * grad[j];
                for m in 0..d {
                    jac[(row + j, col_block(l) + m)] =
                        nf * coeffs.d3 * rho.powf(p_full) * hess[j * d + m];
                }
            }
            row += d;
        }
    }
    jac
}

/// Converged output of the reduced Newton iteration.
#[derive(Clone, Debug)]
pub struct ReducedSolution {
    pub point: ReducedPoint,
    pub residual_norm: f64,
    pub jacobian_condition: f64,
    pub iterations: usize,
}

/// The reduced system in scale-free form: each row divided by its natural
/// magnitude, as a function of `(log t, ξ, z)`, with its exact Jacobian.
///
/// * `f̂(1,0) = (u−1)/(u+1)`, `u = (n−2) D2 H(ξ,ξ) t₁^{n−4} / (2 D1)`
/// * `f̂(1,j) = ∂_j H / H`
/// * `f̂(ℓ,0) = (v−1)/(v+1)`,
///   `v = (n−2) D3 (t_ℓ/t_{ℓ−1})^{(n−2)/2} U_0(z_ℓ) / (4 D1 t_ℓ²)`
/// * `f̂(ℓ,j) = ∂_j U_0(z_ℓ)`
///
/// `f̂ = 0` iff the raw system vanishes (all scales are positive).
fn scaled_system(
    n: u32,
    point: &ReducedPoint,
    coeffs: &ReducedCoefficients,
    robin: &RobinResult,
) -> (DVector<f64>, DMatrix<f64>) {
    let nf = n as f64;
    let d = n as usize;
    let k = point.t.len();
    let total = k * (1 + d);
    let mut f = DVector::zeros(total);
    let mut jac = DMatrix::zeros(total, total);
    let col_t = |l: usize| l * (1 + d);
    let mut row = 0;
    for l in 0..k {
        let t = point.t[l];
        if l == 0 {
            let u = (nf - 2.0) * coeffs.d2 * robin.value * t.powf(nf - 4.0) / (2.0 * coeffs.d1);
            let w = 2.0 * u / (1.0 + u).powi(2);
            f[row] = (u - 1.0) / (u + 1.0);
            jac[(row, col_t(0))] = w * (nf - 4.0);
            for m in 0..d {
                jac[(row, col_t(0) + 1 + m)] = w * robin.gradient[m] / robin.value;
            }
            row += 1;
            for j in 0..d {
                f[row + j] = robin.gradient[j] / robin.value;
                for m in 0..d {
                    jac[(row + j, col_t(0) + 1 + m)] = robin.hessian[(j, m)] / robin.value
                        - robin.gradient[j] * robin.gradient[m] / (robin.value * robin.value);
                }
            }
            row += d;
        } else {
            let rho = t / point.t[l - 1];
            let z = &point.z[l - 1];
            let zn = norm(z);
            let uz = u0(n, zn);
            let grad = u0_grad(n, z);
            let hess = u0_hess(n, z);
            let v = (nf - 2.0) * coeffs.d3 * rho.powf((nf - 2.0) / 2.0) * uz
                / (4.0 * coeffs.d1 * t * t);
            let w = 2.0 * v / (1.0 + v).powi(2);
            f[row] = (v - 1.0) / (v + 1.0);
            jac[(row, col_t(l))] = w * (nf - 6.0) / 2.0;
            jac[(row, col_t(l - 1))] = -w * (nf - 2.0) / 2.0;
            for m in 0..d {
                jac[(row, col_t(l) + 1 + m)] = w * grad[m] / uz;
            }
            row += 1;
            for j in 0..d {
                f[row + j] = grad[j];
                for m in 0..d {
                    jac[(row + j, col_t(l) + 1 + m)] = hess[j * d + m];
                }
            }
            row += d;
        }
    }
    (f, jac)
}

/// Damped Newton on the scale-free system in `(log t, ξ, z)` variables,
/// to `‖f̂‖_∞ ≤ 1e−12`.
///
/// The raw-variable Newton direction is useless here: a translation row
/// scales like `(t_ℓ/t_{ℓ−1})^{n/2}`, so its sensitivity to `t` dwarfs its
/// sensitivity to `z` by many orders and the linearized step trades one
/// against the other (z is repelled). In the scale-free form the rows are
/// O(1) and decoupled to leading order. Steps are halved (up to 20 times)
/// on residual increase or when the iterate leaves the admissible box.
pub fn newton_reduced(
    seed: &ReducedPoint,
    coeffs: &ReducedCoefficients,
    solver: &GreensSolver,
    bounds: &SkBounds,
) -> Result<ReducedSolution> {
    let n = {
        // dimension from the anchor length
        seed.xi.len() as u32
    };
    let k = seed.t.len();
    if !bounds.contains(seed) {
        return Err(Error::LeftAdmissibleRegion(
            "newton seed outside the admissible box".into(),
        ));
    }
    let mut point = seed.clone();
    let mut history = Vec::new();
    let col_t = |l: usize| l * (1 + n as usize);
    for it in 0..80 {
        let robin = solver.robin_diag(&point.xi)?;
        let (fs, jac) = scaled_system(n, &point, coeffs, &robin);
        let fnorm = fs.amax();
        history.push(fnorm);
        if fnorm <= 1e-12 {
            let raw = reduced_jacobian(n, &point, coeffs, &robin);
            let svd = raw.svd(false, false);
            let smax = svd.singular_values.max();
            let smin = svd.singular_values.min();
            let f = reduced_f(n, &point, coeffs, &robin);
            return Ok(ReducedSolution {
                point,
                residual_norm: f.amax(),
                jacobian_condition: smax / smin.max(f64::MIN_POSITIVE),
                iterations: it,
            });
        }
        let step = solve_dense(&jac, &fs).map_err(|_| {
            Error::SingularMatrix("reduced jacobian singular away from the zero".into())
        })?;
        let apply = |p: &ReducedPoint, alpha: f64| -> ReducedPoint {
            let mut q = p.clone();
            let d = n as usize;
            for l in 0..k {
                // clamp the log-step so t stays finite through wild seeds
                let dt = (alpha * step[col_t(l)]).clamp(-1.5, 1.5);
                q.t[l] *= (-dt).exp();
            }
            for m in 0..d {
                q.xi[m] -= alpha * step[1 + m];
            }
            for l in 1..k {
                for m in 0..d {
                    q.z[l - 1][m] -= alpha * step[col_t(l) + 1 + m];
                }
            }
            q
        };
        let mut alpha = 1.0;
        let mut accepted = false;
        for _ in 0..20 {
            let trial = apply(&point, alpha);
            if !bounds.contains(&trial) {
                alpha *= 0.5;
                continue;
            }
            let robin_t = solver.robin_diag(&trial.xi)?;
            let (f_t, _) = scaled_system(n, &trial, coeffs, &robin_t);
            if f_t.amax() < fnorm {
                point = trial;
                accepted = true;
                break;
            }
            alpha *= 0.5;
        }
        if !accepted {
            return Err(Error::NewtonDivergence {
                iterations: it,
                final_residual: fnorm,
                history,
            });
        }
    }
    Err(Error::NewtonDivergence {
        iterations: 80,
        final_residual: *history.last().unwrap_or(&f64::NAN),
        history,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::greens::DomainSpec;
    use crate::reduction::Provenance;

    impl ReducedPoint {
        fn to_vector(&self, n: u32) -> DVector<f64> {
            let d = n as usize;
            let k = self.t.len();
            let mut x = DVector::zeros(k * (1 + d));
            let mut at = 0;
            for l in 0..k {
                x[at] = self.t[l];
                at += 1;
                let block = if l == 0 { &self.xi } else { &self.z[l - 1] };
                for (m, v) in block.iter().enumerate() {
                    x[at + m] = *v;
                }
                at += d;
            }
            x
        }

        fn from_vector(&self, x: &DVector<f64>, n: u32) -> ReducedPoint {
            let d = n as usize;
            let k = self.t.len();
            let mut t = Vec::with_capacity(k);
            let mut z = Vec::with_capacity(k.saturating_sub(1));
            let mut xi = vec![0.0; d];
            let mut at = 0;
            for l in 0..k {
                t.push(x[at]);
                at += 1;
                if l == 0 {
                    xi.copy_from_slice(&x.as_slice()[at..at + d]);
                } else {
                    z.push(x.as_slice()[at..at + d].to_vec());
                }
                at += d;
            }
            ReducedPoint { t, xi, z }
        }
    }

    fn rigged(d1: f64, d2: f64, d3: f64) -> ReducedCoefficients {
        ReducedCoefficients {
            d1,
            d2,
            d3,
            grad_v_norms: vec![1.0; 8],
            fit_residual: 0.0,
            fit_condition: 1.0,
            provenance: Provenance::Quadrature,
            energy_c0: 0.0,
        }
    }

    #[test]
    fn gamma_values_and_identity() {
        assert_eq!(gamma(7, 1).unwrap(), Ratio::new(1, 3));
        assert_eq!(gamma(7, 2).unwrap(), Ratio::new(11, 3));
        assert!(gamma(6, 1).is_err());
        // 1 + 2γ₂ = 25/3 = (5/2)(γ₂ − γ₁)
        let sched = GammaSchedule::new(7, 4).unwrap();
        let lhs = Ratio::from_integer(1) + Ratio::from_integer(2) * sched.exponents[1];
        assert_eq!(lhs, Ratio::new(25, 3));
        for n in 7..=12 {
            let s = GammaSchedule::new(n, 4).unwrap();
            for ell in 2..=4 {
                assert!(s.identity_holds(ell), "identity fails at n={n}, ell={ell}");
            }
            assert!(
                s.exponents.windows(2).all(|w| w[0] < w[1]),
                "gamma must increase"
            );
        }
    }

    #[test]
    fn rigged_constants_give_unit_zeros() {
        let n = 7u32;
        // 2D1 = (n−2) D2 H00 with H00 = 1 → t1 = 1
        let c = rigged(2.5, 1.0, 1.0);
        let t = explicit_t0(n, &c, 1.0, 1);
        assert!((t[0] - 1.0).abs() < 1e-14);
        // additionally 4D1 = (n−2)D3 → the recursion fixes t ≡ 1
        let c2 = rigged(1.25, 0.5, 1.0);
        let t2 = explicit_t0(n, &c2, 1.0, 3);
        for v in t2 {
            assert!((v - 1.0).abs() < 1e-14);
        }
    }

    #[test]
    fn t1_decreases_in_h00() {
        let c = rigged(2.5, 1.0, 1.0);
        let a = explicit_t0(7, &c, 0.5, 1)[0];
        let b = explicit_t0(7, &c, 1.0, 1)[0];
        let d = explicit_t0(7, &c, 2.0, 1)[0];
        assert!(a > b && b > d);
    }

    #[test]
    fn explicit_zero_annihilates_f() {
        let n = 7u32;
        let c = rigged(2.5e5, 7.0e11, 1.2e6);
        let dom = DomainSpec::UnitBall { dim: n };
        let solver = GreensSolver::new(&dom).unwrap();
        let robin = solver.robin_diag(&[0.0; 7]).unwrap();
        let t0 = explicit_t0(n, &c, robin.value, 2);
        let point = ReducedPoint {
            t: t0,
            xi: vec![0.0; 7],
            z: vec![vec![0.0; 7]],
        };
        let f = reduced_f(n, &point, &c, &robin);
        assert!(f.amax() < 1e-12, "residual {:.3e}", f.amax());
    }

    #[test]
    fn offset_rows_carry_opposite_sign_of_z() {
        let n = 7u32;
        let c = rigged(2.5, 1.0, 1.0);
        let robin = GreensSolver::new(&DomainSpec::UnitBall { dim: n })
            .unwrap()
            .robin_diag(&[0.0; 7])
            .unwrap();
        let mut z = vec![0.0; 7];
        z[2] = 0.05;
        z[5] = -0.1;
        let point = ReducedPoint {
            t: vec![1.0, 1.0],
            xi: vec![0.0; 7],
            z: vec![z.clone()],
        };
        let f = reduced_f(n, &point, &c, &robin);
        // translation rows of bubble 2 start at 1 + n + 1
        for j in 0..7 {
            let val = f[(1 + 7 + 1) + j];
            if z[j] == 0.0 {
                assert_eq!(val, 0.0);
            } else {
                assert!(val * z[j] < 0.0, "row {j} sign");
            }
        }
    }

    #[test]
    fn doubling_h00_shifts_first_row_linearly() {
        let n = 7u32;
        let c = rigged(2.5, 3.0, 1.0);
        let mk = |h: f64| RobinResult {
            value: h,
            gradient: vec![0.0; 7],
            hessian: nalgebra::DMatrix::identity(7, 7),
            accuracy: 0.0,
            condition: 1.0,
        };
        let point = ReducedPoint {
            t: vec![1.3],
            xi: vec![0.0; 7],
            z: vec![],
        };
        let f1 = reduced_f(n, &point, &c, &mk(1.0));
        let f2 = reduced_f(n, &point, &c, &mk(2.0));
        let expect = 2.0 * c.d2 * 1.3f64.powi(5) * 1.0;
        assert!(((f2[0] - f1[0]) - expect).abs() < 1e-12 * expect);
    }

    #[test]
    fn jacobian_matches_finite_differences() {
        let n = 7u32;
        let c = rigged(2.5, 1.7, 0.9);
        let dom = DomainSpec::UnitBall { dim: n };
        let solver = GreensSolver::new(&dom).unwrap();
        let mut z = vec![0.0; 7];
        z[0] = 0.2;
        z[3] = -0.15;
        let mut xi = vec![0.0; 7];
        xi[1] = 0.1;
        let point = ReducedPoint {
            t: vec![0.9, 1.2],
            xi,
            z: vec![z],
        };
        let robin = solver.robin_diag(&point.xi).unwrap();
        let jac = reduced_jacobian(n, &point, &c, &robin);
        let x0 = point.to_vector(n);
        let h = 1e-6;
        for col in 0..x0.len() {
            let mut xp = x0.clone();
            let mut xm = x0.clone();
            xp[col] += h;
            xm[col] -= h;
            let pp = point.from_vector(&xp, n);
            let pm = point.from_vector(&xm, n);
            let fp = reduced_f(n, &pp, &c, &solver.robin_diag(&pp.xi).unwrap());
            let fm = reduced_f(n, &pm, &c, &solver.robin_diag(&pm.xi).unwrap());
            for row in 0..x0.len() {
                let fd = (fp[row] - fm[row]) / (2.0 * h);
                let scale = jac[(row, col)].abs().max(1.0);
                assert!(
                    (fd - jac[(row, col)]).abs() < 2e-5 * scale,
                    "J[{row},{col}] fd {fd} vs {}",
                    jac[(row, col)]
                );
            }
        }
    }

    #[test]
    fn newton_recovers_zero_from_perturbed_seed() {
        let n = 7u32;
        let c = rigged(2.5e5, 7.0e11, 1.2e6);
        let dom = DomainSpec::UnitBall { dim: n };
        let solver = GreensSolver::new(&dom).unwrap();
        let robin = solver.robin_diag(&[0.0; 7]).unwrap();
        let t0 = explicit_t0(n, &c, robin.value, 2);
        let bounds = SkBounds::centered_on(&t0, 10.0);
        // exact seed: zero iterations
        let exact = ReducedPoint {
            t: t0.clone(),
            xi: vec![0.0; 7],
            z: vec![vec![0.0; 7]],
        };
        let sol0 = newton_reduced(&exact, &c, &solver, &bounds).unwrap();
        assert_eq!(sol0.iterations, 0);
        assert!(sol0.jacobian_condition.is_finite());
        // 20% multiplicative perturbation on t, offsets in xi and z
        let mut xi = vec![0.0; 7];
        xi[0] = 0.05;
        let mut z = vec![0.0; 7];
        z[1] = 0.1;
        let seed = ReducedPoint {
            t: t0.iter().map(|t| 1.2 * t).collect(),
            xi,
            z: vec![z],
        };
        let sol = newton_reduced(&seed, &c, &solver, &bounds).unwrap();
        for (a, b) in sol.point.t.iter().zip(&t0) {
            assert!(((a - b) / b).abs() < 1e-8, "t {a} vs {b}");
        }
        assert!(norm(&sol.point.xi) < 1e-8);
        assert!(norm(&sol.point.z[0]) < 1e-8);
    }

    #[test]
    fn zero_set_invariant_under_common_scaling() {
        let n = 7u32;
        let c = rigged(2.5e5, 7.0e11, 1.2e6);
        let scaled = rigged(2.5e5 * 37.0, 7.0e11 * 37.0, 1.2e6 * 37.0);
        let dom = DomainSpec::UnitBall { dim: n };
        let solver = GreensSolver::new(&dom).unwrap();
        let robin = solver.robin_diag(&[0.0; 7]).unwrap();
        let t0 = explicit_t0(n, &c, robin.value, 2);
        let t0s = explicit_t0(n, &scaled, robin.value, 2);
        for (a, b) in t0.iter().zip(&t0s) {
            assert!(((a - b) / b).abs() < 1e-12);
        }
    }
}
