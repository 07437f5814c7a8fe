//! Finite differences on nonuniform meshes.
//!
//! The radial Laplacian `Δu = −u'' − (n−1) u'/r` is discretized in
//! conservative form, `Δu = −(r^{n−1} u')' / r^{n−1}`, with exact cell
//! volumes `∫ r^{n−1} dr`. The scheme is exactly self-adjoint with respect
//! to the cell volumes, exact on quadratics, and its first cell (inner face
//! at r = 0 with zero flux) reduces to the pole formula `Δu(0) = −n u''(0)`.

use crate::error::{Error, Result};
use crate::numerics::grid::RadialField;

/// Fornberg weights: `Σ w_j u(x_j)` approximates the `order`-th derivative
/// at `x0` from arbitrary distinct nodes `xs`.
pub fn fd_weights(x0: f64, xs: &[f64], order: usize) -> Vec<f64> {
    let n = xs.len();
    assert!(order < n);
    let mut c = vec![vec![0.0; order + 1]; n];
    let mut c1 = 1.0;
    let mut c4 = xs[0] - x0;
    c[0][0] = 1.0;
    for i in 1..n {
        let mi = i.min(order);
        let mut c2 = 1.0;
        let c5 = c4;
        c4 = xs[i] - x0;
        for j in 0..i {
            let c3 = xs[i] - xs[j];
            c2 *= c3;
            if j == i - 1 {
                for k in (1..=mi).rev() {
                    c[i][k] = c1 * (k as f64 * c[i - 1][k - 1] - c5 * c[i - 1][k]) / c2;
                }
                c[i][0] = -c1 * c5 * c[i - 1][0] / c2;
            }
            for k in (1..=mi).rev() {
                c[j][k] = (c4 * c[j][k] - k as f64 * c[j][k - 1]) / c3;
            }
            c[j][0] = c4 * c[j][0] / c3;
        }
        c1 = c2;
    }
    c.into_iter().map(|row| row[order]).collect()
}

/// Stencil of the conservative radial Laplacian at interior node `i`:
/// coefficients for `(u_{i-1}, u_i, u_{i+1})`. At `i = 0` the inner face
/// carries zero flux (`u'(0) = 0`) and the first coefficient is unused.
pub fn laplacian_stencil(nodes: &[f64], dim: u32, i: usize) -> [f64; 3] {
    let nf = dim as f64;
    let r = nodes[i];
    let face_plus = 0.5 * (r + nodes[i + 1]);
    let face_minus = if i == 0 { 0.0 } else { 0.5 * (nodes[i - 1] + r) };
    let vol = (face_plus.powf(nf) - face_minus.powf(nf)) / nf;
    let cp = face_plus.powf(nf - 1.0) / (nodes[i + 1] - r) / vol;
    if i == 0 {
        [0.0, cp, -cp]
    } else {
        let cm = face_minus.powf(nf - 1.0) / (r - nodes[i - 1]) / vol;
        [-cm, cm + cp, -cp]
    }
}

/// Cell volume `∫_{face-}^{face+} r^{n−1} dr` at node `i` (the weight that
/// makes the stencil symmetric).
pub fn cell_volume(nodes: &[f64], dim: u32, i: usize) -> f64 {
    let nf = dim as f64;
    let r = nodes[i];
    let face_minus = if i == 0 { 0.0 } else { 0.5 * (nodes[i - 1] + r) };
    let face_plus = if i + 1 == nodes.len() {
        *nodes.last().unwrap()
    } else {
        0.5 * (r + nodes[i + 1])
    };
    (face_plus.powf(nf) - face_minus.powf(nf)) / nf
}

/// `Δu = −u'' − (n−1)u'/r` of a sampled radial field.
///
/// Conservative stencil at the first and interior nodes; at the last node
/// (where no outer cell exists) a 4-point one-sided formula combines the
/// analytic pieces.
pub fn radial_laplacian(field: &RadialField) -> Result<RadialField> {
    let nodes = &field.grid.nodes;
    let u = &field.values;
    let n = nodes.len();
    if n < 3 {
        return Err(Error::GridTooCoarse(
            "radial laplacian needs at least 3 nodes".into(),
        ));
    }
    let nf = field.grid.dim as f64;
    let mut out = vec![0.0; n];
    // difference form: exact zero on constants
    for i in 0..n - 1 {
        let st = laplacian_stencil(nodes, field.grid.dim, i);
        out[i] = if i == 0 {
            -st[2] * (u[0] - u[1])
        } else {
            -st[0] * (u[i] - u[i - 1]) - st[2] * (u[i] - u[i + 1])
        };
    }
    // boundary node: one-sided u' and u'' from the last four nodes,
    // accumulated against differences (derivative weights kill constants)
    let m = n.min(4);
    let xs = &nodes[n - m..];
    let us = &u[n - m..];
    let base = u[n - 1];
    let w1 = fd_weights(nodes[n - 1], xs, 1);
    let w2 = fd_weights(nodes[n - 1], xs, 2);
    let d1: f64 = w1.iter().zip(us).map(|(w, v)| w * (v - base)).sum();
    let d2: f64 = w2.iter().zip(us).map(|(w, v)| w * (v - base)).sum();
    out[n - 1] = -d2 - (nf - 1.0) * d1 / nodes[n - 1];
    Ok(RadialField::new(field.grid.clone(), out))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numerics::grid::RadialGrid;
    use std::sync::Arc;

    fn grid() -> Arc<RadialGrid> {
        Arc::new(RadialGrid::for_scales(7, 1e-4, 0.04, 12, 120).unwrap())
    }

    #[test]
    fn fornberg_matches_hand_weights() {
        // central second derivative on a uniform 3-point stencil
        let w = fd_weights(0.0, &[-1.0, 0.0, 1.0], 2);
        assert!((w[0] - 1.0).abs() < 1e-14);
        assert!((w[1] + 2.0).abs() < 1e-14);
        assert!((w[2] - 1.0).abs() < 1e-14);
    }

    #[test]
    fn constant_maps_to_zero() {
        let g = grid();
        let f = RadialField::from_fn(g, |_| 1.0);
        let lap = radial_laplacian(&f).unwrap();
        assert_eq!(lap.sup_norm(), 0.0);
    }

    #[test]
    fn quadratic_is_exact() {
        let g = grid();
        let f = RadialField::from_fn(g.clone(), |r| r * r);
        let lap = radial_laplacian(&f).unwrap();
        let n = g.dim as f64;
        for (i, v) in lap.values.iter().enumerate() {
            let rel = (v + 2.0 * n) / (2.0 * n);
            assert!(rel.abs() < 1e-10, "node {i}: {v} vs {}", -2.0 * n);
        }
    }

    #[test]
    fn too_few_nodes_is_an_error() {
        let g = Arc::new(RadialGrid {
            nodes: vec![0.5, 1.0],
            dim: 7,
            pivot: 0.5,
        });
        let f = RadialField::from_fn(g, |r| r);
        assert!(matches!(
            radial_laplacian(&f),
            Err(Error::GridTooCoarse(_))
        ));
    }

    #[test]
    fn stencil_is_volume_symmetric() {
        let g = grid();
        let nodes = &g.nodes;
        for i in 1..nodes.len() - 2 {
            let si = laplacian_stencil(nodes, 7, i);
            let sj = laplacian_stencil(nodes, 7, i + 1);
            let vi = cell_volume(nodes, 7, i);
            let vj = cell_volume(nodes, 7, i + 1);
            // v_i L_{i,i+1} == v_{i+1} L_{i+1,i}
            let a = vi * si[2];
            let b = vj * sj[0];
            assert!(
                ((a - b) / a.abs().max(1e-300)).abs() < 1e-12,
                "asymmetry at {i}"
            );
        }
    }
}
