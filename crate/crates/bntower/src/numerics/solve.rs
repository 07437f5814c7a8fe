//! Dense linear solves with scaling equilibration, and bordered (saddle)
//! systems `[A C; B 0] [φ; λ] = [rhs; 0]`.
//!
//! Tower operators carry entries spanning ~50 orders of magnitude
//! (`1/h²` near the innermost scale against O(1) rows outside), so rows
//! and columns are equilibrated by powers of two before factorization and
//! the solution is polished by one round of iterative refinement.

use crate::error::{Error, Result};
use nalgebra::{DMatrix, DVector, Dyn};

fn pow2_scale(x: f64) -> f64 {
    if x == 0.0 || !x.is_finite() {
        1.0
    } else {
        // nearest power of two to 1/x
        (2.0f64).powi(-(x.abs().log2().round() as i32))
    }
}

/// LU factorization of a power-of-two equilibrated matrix, reusable across
/// right-hand sides.
pub struct EquilibratedLu {
    lu: nalgebra::LU<f64, Dyn, Dyn>,
    scaled: DMatrix<f64>,
    row_scale: Vec<f64>,
    col_scale: Vec<f64>,
    original: DMatrix<f64>,
}

impl EquilibratedLu {
    pub fn new(a: DMatrix<f64>) -> EquilibratedLu {
        let n = a.nrows();
        assert_eq!(n, a.ncols());
        let mut row_scale = vec![1.0f64; n];
        for i in 0..n {
            row_scale[i] = pow2_scale(a.row(i).amax());
        }
        let mut scaled = a.clone();
        for i in 0..n {
            for j in 0..n {
                scaled[(i, j)] *= row_scale[i];
            }
        }
        let mut col_scale = vec![1.0f64; n];
        for j in 0..n {
            col_scale[j] = pow2_scale(scaled.column(j).amax());
        }
        for j in 0..n {
            for i in 0..n {
                scaled[(i, j)] *= col_scale[j];
            }
        }
        let lu = scaled.clone().lu();
        EquilibratedLu {
            lu,
            scaled,
            row_scale,
            col_scale,
            original: a,
        }
    }

    pub fn solve(&self, b: &DVector<f64>) -> Result<DVector<f64>> {
        let n = b.len();
        if n == 0 {
            return Ok(DVector::zeros(0));
        }
        let scaled_b = DVector::from_fn(n, |i, _| b[i] * self.row_scale[i]);
        let mut y = self
            .lu
            .solve(&scaled_b)
            .ok_or_else(|| Error::SingularMatrix("LU factorization failed".into()))?;
        // one refinement pass in the scaled system
        let resid = &scaled_b - &self.scaled * &y;
        if let Some(dy) = self.lu.solve(&resid) {
            y += dy;
        }
        let x = DVector::from_fn(n, |i, _| y[i] * self.col_scale[i]);
        let r = b - &self.original * &x;
        let scale = b.amax().max(self.original.amax() * x.amax());
        if !r.amax().is_finite() || (scale > 0.0 && r.amax() > 1e-6 * scale) {
            return Err(Error::SingularMatrix(format!(
                "residual {:.3e} too large relative to scale {:.3e}",
                r.amax(),
                scale
            )));
        }
        Ok(x)
    }
}

/// One-shot `A x = b`.
pub fn solve_dense(a: &DMatrix<f64>, b: &DVector<f64>) -> Result<DVector<f64>> {
    EquilibratedLu::new(a.clone()).solve(b)
}

/// Assemble the bordered matrix `[A C; B 0]`.
pub fn bordered_matrix(a: &DMatrix<f64>, c: &DMatrix<f64>, b: &DMatrix<f64>) -> DMatrix<f64> {
    let n = a.nrows();
    let k = b.nrows();
    assert_eq!(a.ncols(), n);
    assert_eq!(c.nrows(), n);
    assert_eq!(c.ncols(), k);
    assert_eq!(b.ncols(), n);
    let mut full = DMatrix::zeros(n + k, n + k);
    full.view_mut((0, 0), (n, n)).copy_from(a);
    full.view_mut((0, n), (n, k)).copy_from(c);
    full.view_mut((n, 0), (k, n)).copy_from(b);
    full
}

/// Solve the saddle system `A φ + Bᵀ λ = rhs`, `B φ = 0`.
pub fn bordered_solve(
    a: &DMatrix<f64>,
    b: &DMatrix<f64>,
    rhs: &DVector<f64>,
) -> Result<(DVector<f64>, DVector<f64>)> {
    bordered_solve_with_columns(a, &b.transpose(), b, rhs)
}

/// General bordered solve `A φ + C λ = rhs`, `B φ = 0`, where the coupling
/// columns `C` need not be `Bᵀ` (the projected linear problem couples
/// through `(Δ−ε) Z` columns but constrains with inner-product rows).
pub fn bordered_solve_with_columns(
    a: &DMatrix<f64>,
    c: &DMatrix<f64>,
    b: &DMatrix<f64>,
    rhs: &DVector<f64>,
) -> Result<(DVector<f64>, DVector<f64>)> {
    let n = a.nrows();
    let k = b.nrows();
    assert_eq!(rhs.len(), n);
    let full = bordered_matrix(a, c, b);
    let mut big_rhs = DVector::zeros(n + k);
    big_rhs.rows_mut(0, n).copy_from(rhs);
    let sol = EquilibratedLu::new(full).solve(&big_rhs).map_err(|e| match e {
        Error::SingularMatrix(msg) => Error::SingularSystem(degenerate_constraint(b, &msg)),
        other => other,
    })?;
    let phi = DVector::from_fn(n, |i, _| sol[i]);
    let lambda = DVector::from_fn(k, |i, _| sol[n + i]);
    Ok((phi, lambda))
}

/// Best-effort identification of a degenerate constraint row for error
/// reporting: the row with the smallest norm, or the pair with the largest
/// normalized overlap.
fn degenerate_constraint(b: &DMatrix<f64>, detail: &str) -> String {
    let k = b.nrows();
    if k == 0 {
        return format!("unconstrained block singular: {detail}");
    }
    let mut worst = (0usize, f64::INFINITY);
    for i in 0..k {
        let norm = b.row(i).norm();
        if norm < worst.1 {
            worst = (i, norm);
        }
    }
    let mut overlap = (0usize, 0usize, 0.0f64);
    for i in 0..k {
        for j in i + 1..k {
            let ni = b.row(i).norm();
            let nj = b.row(j).norm();
            if ni == 0.0 || nj == 0.0 {
                continue;
            }
            let c = (b.row(i).dot(&b.row(j)) / (ni * nj)).abs();
            if c > overlap.2 {
                overlap = (i, j, c);
            }
        }
    }
    format!(
        "constraint {} has norm {:.3e}; most collinear pair ({}, {}) with cosine {:.6}; {detail}",
        worst.0, worst.1, overlap.0, overlap.1, overlap.2
    )
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn identity_with_single_constraint() {
        // A = I, B = e1ᵀ, rhs = e1 → φ = 0, λ = 1
        let a = DMatrix::identity(4, 4);
        let b = DMatrix::from_row_slice(1, 4, &[1.0, 0.0, 0.0, 0.0]);
        let rhs = DVector::from_column_slice(&[1.0, 0.0, 0.0, 0.0]);
        let (phi, lambda) = bordered_solve(&a, &b, &rhs).unwrap();
        assert!(phi.amax() < 1e-12);
        assert!((lambda[0] - 1.0).abs() < 1e-12);
    }

    #[test]
    fn empty_constraint_block_is_plain_solve() {
        let a = DMatrix::from_row_slice(2, 2, &[2.0, 1.0, 1.0, 3.0]);
        let b = DMatrix::zeros(0, 2);
        let rhs = DVector::from_column_slice(&[1.0, -1.0]);
        let (phi, lambda) = bordered_solve(&a, &b, &rhs).unwrap();
        assert_eq!(lambda.len(), 0);
        let resid = &rhs - &a * &phi;
        assert!(resid.amax() < 1e-13);
    }

    #[test]
    fn random_spd_with_orthonormal_constraints() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let n = 20;
        let m = DMatrix::from_fn(n, n, |_, _| rng.gen_range(-1.0..1.0));
        let a = &m * m.transpose() + DMatrix::identity(n, n) * 0.5;
        // three orthonormal rows via Gram-Schmidt
        let mut rows: Vec<DVector<f64>> = Vec::new();
        while rows.len() < 3 {
            let mut v = DVector::from_fn(n, |_, _| rng.gen_range(-1.0..1.0));
            for r in &rows {
                let p = r.dot(&v);
                v -= r * p;
            }
            if v.norm() > 1e-3 {
                v /= v.norm();
                rows.push(v);
            }
        }
        let mut b = DMatrix::zeros(3, n);
        for (i, r) in rows.iter().enumerate() {
            b.row_mut(i).copy_from(&r.transpose());
        }
        let rhs = DVector::from_fn(n, |_, _| rng.gen_range(-1.0..1.0));
        let (phi, lambda) = bordered_solve(&a, &b, &rhs).unwrap();
        let r1 = &a * &phi + b.transpose() * &lambda - &rhs;
        let r2 = &b * &phi;
        assert!(r1.amax() < 1e-10, "residual {}", r1.amax());
        assert!(r2.amax() < 1e-10, "constraint residual {}", r2.amax());
    }

    #[test]
    fn multipliers_scale_reciprocally_with_row_scaling() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let n = 12;
        let m = DMatrix::from_fn(n, n, |_, _| rng.gen_range(-1.0..1.0));
        let a = &m * m.transpose() + DMatrix::identity(n, n);
        let b = DMatrix::from_fn(2, n, |_, _| rng.gen_range(-1.0..1.0));
        let rhs = DVector::from_fn(n, |_, _| rng.gen_range(-1.0..1.0));
        let (_, lambda) = bordered_solve(&a, &b, &rhs).unwrap();
        let alpha = 64.0;
        let (_, lambda_scaled) = bordered_solve(&a, &(&b * alpha), &rhs).unwrap();
        for i in 0..2 {
            assert!(
                (lambda_scaled[i] - lambda[i] / alpha).abs() <= 1e-10 * lambda[i].abs().max(1e-10)
            );
        }
    }

    #[test]
    fn singular_constraint_reported() {
        let a = DMatrix::identity(3, 3);
        let mut b = DMatrix::zeros(2, 3);
        b[(0, 0)] = 1.0;
        b[(1, 0)] = 1.0; // duplicate constraint
        let rhs = DVector::from_column_slice(&[1.0, 0.0, 0.0]);
        let out = bordered_solve(&a, &b, &rhs);
        assert!(matches!(out, Err(Error::SingularSystem(_))));
    }

    #[test]
    fn equilibration_handles_wild_scales() {
        // diag(1e30, 1e-30, 1) system
        let a = DMatrix::from_diagonal(&DVector::from_column_slice(&[1e30, 1e-30, 1.0]));
        let rhs = DVector::from_column_slice(&[2e30, 3e-30, 5.0]);
        let x = solve_dense(&a, &rhs).unwrap();
        assert!((x[0] - 2.0).abs() < 1e-12);
        assert!((x[1] - 3.0).abs() < 1e-12);
        assert!((x[2] - 5.0).abs() < 1e-12);
    }

    #[test]
    fn factorization_reuse_matches_one_shot() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let n = 15;
        let a = DMatrix::from_fn(n, n, |i, j| {
            rng.gen_range(-1.0..1.0) + if i == j { 4.0 } else { 0.0 }
        });
        let lu = EquilibratedLu::new(a.clone());
        for _ in 0..3 {
            let b = DVector::from_fn(n, |_, _| rng.gen_range(-1.0..1.0));
            let x1 = lu.solve(&b).unwrap();
            let x2 = solve_dense(&a, &b).unwrap();
            assert!((&x1 - &x2).amax() < 1e-12);
        }
    }
}
